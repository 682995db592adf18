/**
 * @file checkpoint.h
 * @brief Named-tensor container with bit-exact round trips.
 *
 * Binary layout (all integers little-endian):
 *   magic "QTNT" + u32 version
 *   u64 metadata length + UTF-8 metadata (free-form, typically JSON)
 *   u64 record count, then per record:
 *     u32 name length + name bytes
 *     u8 dtype ('f' = float32, 'd' = float64)
 *     u32 rank + i64 dims
 *     u64 payload byte count + raw values
 */
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "common/error.h"
#include "tensor/tensor.h"

namespace quartet {

struct TensorRecord {
  std::string name;
  char dtype = 'f';
  Shape shape;
  std::vector<uint8_t> bytes;
};

class TensorContainer {
 public:
  std::string metadata;

  void add(TensorRecord record) { records_.push_back(std::move(record)); }

  template <typename S>
  void addTensor(const std::string& name, const Tensor<S>& tensor) {
    TensorRecord record;
    record.name = name;
    record.dtype = sizeof(S) == 4 ? 'f' : 'd';
    record.shape = tensor.shape();
    record.bytes.resize(static_cast<size_t>(tensor.numel()) * sizeof(S));
    std::memcpy(record.bytes.data(), tensor.value().data(), record.bytes.size());
    records_.push_back(std::move(record));
  }

  template <typename S>
  void addValues(const std::string& name, const std::vector<S>& values, Shape shape) {
    TensorRecord record;
    record.name = name;
    record.dtype = sizeof(S) == 4 ? 'f' : 'd';
    record.shape = std::move(shape);
    record.bytes.resize(values.size() * sizeof(S));
    std::memcpy(record.bytes.data(), values.data(), record.bytes.size());
    records_.push_back(std::move(record));
  }

  const std::vector<TensorRecord>& records() const { return records_; }
  const TensorRecord* find(const std::string& name) const;
  const TensorRecord& require(const std::string& name) const;

  /// Copies a record's payload into an existing tensor; dtype and shape must
  /// match exactly.
  template <typename S>
  void loadInto(const std::string& name, Tensor<S>& tensor) const {
    const TensorRecord& record = require(name);
    const char want = sizeof(S) == 4 ? 'f' : 'd';
    if (record.dtype != want) {
      throw DataError("checkpoint tensor '" + name + "' has dtype '" +
                      std::string(1, record.dtype) + "', expected '" + std::string(1, want) + "'");
    }
    if (record.shape != tensor.shape()) {
      throw DataError("checkpoint tensor '" + name + "' has shape " + shapeStr(record.shape) +
                      ", expected " + shapeStr(tensor.shape()));
    }
    std::memcpy(tensor.value().data(), record.bytes.data(), record.bytes.size());
  }

  template <typename S>
  std::vector<S> values(const std::string& name) const {
    const TensorRecord& record = require(name);
    const char want = sizeof(S) == 4 ? 'f' : 'd';
    if (record.dtype != want) {
      throw DataError("checkpoint tensor '" + name + "' has dtype '" +
                      std::string(1, record.dtype) + "', expected '" + std::string(1, want) + "'");
    }
    std::vector<S> out(record.bytes.size() / sizeof(S));
    std::memcpy(out.data(), record.bytes.data(), record.bytes.size());
    return out;
  }

  void save(const std::filesystem::path& path) const;
  static TensorContainer load(const std::filesystem::path& path);

 private:
  std::vector<TensorRecord> records_;
};

}  // namespace quartet
