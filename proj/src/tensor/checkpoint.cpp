#include "tensor/checkpoint.h"

#include <bit>
#include <cstring>

#include "common/io_util.h"

namespace quartet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'Q', 'T', 'N', 'T'};
constexpr uint32_t kVersion = 1;

class ByteWriter {
 public:
  void u8(uint8_t v) { bytes_.push_back(v); }
  void u32(uint32_t v) { raw(&v, sizeof(v)); }
  void u64(uint64_t v) { raw(&v, sizeof(v)); }
  void i64(int64_t v) { raw(&v, sizeof(v)); }
  void raw(const void* data, size_t size) {
    const auto* p = static_cast<const uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + size);
  }
  const std::vector<uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<uint8_t>& bytes) : bytes_(bytes) {}
  uint8_t u8() { return take(1)[0]; }
  uint32_t u32() {
    uint32_t v;
    std::memcpy(&v, take(sizeof(v)), sizeof(v));
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    std::memcpy(&v, take(sizeof(v)), sizeof(v));
    return v;
  }
  int64_t i64() {
    int64_t v;
    std::memcpy(&v, take(sizeof(v)), sizeof(v));
    return v;
  }
  const uint8_t* take(size_t size) {
    if (offset_ + size > bytes_.size()) {
      throw DataError("checkpoint truncated at byte " + std::to_string(offset_));
    }
    const uint8_t* p = bytes_.data() + offset_;
    offset_ += size;
    return p;
  }

 private:
  const std::vector<uint8_t>& bytes_;
  size_t offset_ = 0;
};

}  // namespace

const TensorRecord* TensorContainer::find(const std::string& name) const {
  for (const auto& record : records_) {
    if (record.name == name) return &record;
  }
  return nullptr;
}

const TensorRecord& TensorContainer::require(const std::string& name) const {
  const TensorRecord* record = find(name);
  if (record == nullptr) {
    throw DataError("checkpoint has no tensor named '" + name + "'");
  }
  return *record;
}

void TensorContainer::save(const std::filesystem::path& path) const {
  ByteWriter writer;
  writer.raw(kMagic, sizeof(kMagic));
  writer.u32(kVersion);
  writer.u64(metadata.size());
  writer.raw(metadata.data(), metadata.size());
  writer.u64(records_.size());
  for (const auto& record : records_) {
    writer.u32(static_cast<uint32_t>(record.name.size()));
    writer.raw(record.name.data(), record.name.size());
    writer.u8(static_cast<uint8_t>(record.dtype));
    writer.u32(static_cast<uint32_t>(record.shape.size()));
    for (int d : record.shape) writer.i64(d);
    writer.u64(record.bytes.size());
    writer.raw(record.bytes.data(), record.bytes.size());
  }
  writeFileAtomic(path, writer.bytes().data(), writer.bytes().size());
}

TensorContainer TensorContainer::load(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = readFileBytes(path);
  ByteReader reader(bytes);
  const uint8_t* magic = reader.take(sizeof(kMagic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a tensor container: " + path.string());
  }
  const uint32_t version = reader.u32();
  if (version != kVersion) {
    throw DataError("unsupported container version " + std::to_string(version));
  }
  TensorContainer container;
  const uint64_t meta_len = reader.u64();
  container.metadata.assign(reinterpret_cast<const char*>(reader.take(meta_len)), meta_len);
  const uint64_t count = reader.u64();
  for (uint64_t i = 0; i < count; ++i) {
    TensorRecord record;
    const uint32_t name_len = reader.u32();
    record.name.assign(reinterpret_cast<const char*>(reader.take(name_len)), name_len);
    record.dtype = static_cast<char>(reader.u8());
    if (record.dtype != 'f' && record.dtype != 'd') {
      throw DataError("unknown dtype in tensor '" + record.name + "'");
    }
    const uint32_t rank = reader.u32();
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const int64_t dim = reader.i64();
      record.shape.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    const uint64_t payload = reader.u64();
    const size_t elem = record.dtype == 'f' ? 4 : 8;
    if (payload != static_cast<uint64_t>(numel) * elem) {
      throw DataError("tensor '" + record.name + "' payload does not match its shape");
    }
    const uint8_t* data = reader.take(payload);
    record.bytes.assign(data, data + payload);
    container.records_.push_back(std::move(record));
  }
  return container;
}

}  // namespace quartet
