/**
 * @file cli.cpp
 * @brief The quartet command line: encode, decode, stats, train, generate,
 *        eval.
 */
#include "cli/cli.h"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "codec/codec.h"
#include "codec/token_file.h"
#include "common/io_util.h"
#include "common/log.h"
#include "eval/metrics.h"
#include "eval/svg_plot.h"
#include "midi/midi_file.h"
#include "sample/sampler.h"

namespace quartet {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config file handling
// ---------------------------------------------------------------------------

namespace {

const char* kValidKeys[] = {
    "n_layers",     "n_heads",       "head_dim",      "model_dim",     "ffn_dim",
    "dropout",      "mem_len",       "post_residual", "vocab_on2on",   "vocab_on2off",
    "vocab_pitch",  "vocab_velocity", "segment_len",  "batch_size",    "learning_rate",
    "warmup_frac",  "total_steps",   "eval_interval", "seed",          "grad_clip",
    "precision",    "checkpoint_dir"};

std::string validKeyListing() {
  std::ostringstream out;
  out << "valid keys:";
  for (const char* key : kValidKeys) out << " " << key;
  return out.str();
}

std::string trim(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

int parseInt(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const int parsed = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' expects an integer, got '" + value + "'");
  }
}

double parseDouble(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double parsed = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' expects a number, got '" + value + "'");
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parseKeyValueText(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(text);
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    const auto equals = line.find('=');
    if (equals == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_number) +
                       ": expected 'key = value', got '" + line + "'");
    }
    pairs.emplace_back(trim(line.substr(0, equals)), trim(line.substr(equals + 1)));
  }
  return pairs;
}

void applyConfigKey(FullConfig& config, const std::string& key, const std::string& value) {
  if (key == "n_layers") config.model.n_layers = parseInt(key, value);
  else if (key == "n_heads") config.model.n_heads = parseInt(key, value);
  else if (key == "head_dim") config.model.head_dim = parseInt(key, value);
  else if (key == "model_dim") config.model.model_dim = parseInt(key, value);
  else if (key == "ffn_dim") config.model.ffn_dim = parseInt(key, value);
  else if (key == "dropout") config.model.dropout = parseDouble(key, value);
  else if (key == "mem_len") config.model.mem_len = parseInt(key, value);
  else if (key == "post_residual") config.model.post_residual = postResidualFromName(value);
  else if (key == "vocab_on2on") config.model.vocab_sizes[kOn2On] = parseInt(key, value);
  else if (key == "vocab_on2off") config.model.vocab_sizes[kOn2Off] = parseInt(key, value);
  else if (key == "vocab_pitch") config.model.vocab_sizes[kPitch] = parseInt(key, value);
  else if (key == "vocab_velocity") config.model.vocab_sizes[kVelocity] = parseInt(key, value);
  else if (key == "segment_len") config.train.segment_len = parseInt(key, value);
  else if (key == "batch_size") config.train.batch_size = parseInt(key, value);
  else if (key == "learning_rate") config.train.learning_rate = parseDouble(key, value);
  else if (key == "warmup_frac") config.train.warmup_frac = parseDouble(key, value);
  else if (key == "total_steps") config.train.total_steps = parseInt(key, value);
  else if (key == "eval_interval") config.train.eval_interval = parseInt(key, value);
  else if (key == "seed") config.train.seed = static_cast<uint64_t>(parseInt(key, value));
  else if (key == "grad_clip") config.train.grad_clip = parseDouble(key, value);
  else if (key == "precision") config.train.precision = value;
  else if (key == "checkpoint_dir") config.train.checkpoint_dir = value;
  else {
    throw UsageError("unknown config key '" + key + "'; " + validKeyListing());
  }
}

FullConfig loadFullConfig(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
  FullConfig config;
  if (!config_path.empty()) {
    for (const auto& [key, value] : parseKeyValueText(readFileText(config_path))) {
      applyConfigKey(config, key, value);
    }
  }
  for (const std::string& item : overrides) {
    const auto equals = item.find('=');
    if (equals == std::string::npos) {
      throw UsageError("override '" + item + "' is not key=value");
    }
    applyConfigKey(config, trim(item.substr(0, equals)), trim(item.substr(equals + 1)));
  }
  config.model.validate();
  config.train.validate();
  return config;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

namespace {

std::vector<fs::path> collectMidiInputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& input : inputs) {
    fs::path path(input);
    if (fs::is_directory(path)) {
      auto listed = listFiles(path, ".mid");
      files.insert(files.end(), listed.begin(), listed.end());
      listed = listFiles(path, ".midi");
      files.insert(files.end(), listed.begin(), listed.end());
    } else if (fs::exists(path)) {
      files.push_back(path);
    } else {
      throw DataError("input not found: " + input);
    }
  }
  return files;
}

int cmdEncode(const std::string& input_dir, const std::string& out_dir) {
  const auto files = collectMidiInputs({input_dir});
  if (files.empty()) throw DataError("no input files in " + input_dir);
  ensureDir(out_dir);

  CodecConfig codec_config;
  EncodeStats stats;
  std::array<std::vector<bool>, kNumStreams> seen;
  for (int s = 0; s < kNumStreams; ++s) {
    seen[static_cast<size_t>(s)].assign(
        static_cast<size_t>(s < 2 ? codec_config.max_ticks + 1 : 128), false);
  }
  std::vector<std::string> failed;
  int encoded = 0;
  for (const auto& path : files) {
    try {
      const MidiScore score = parseMidiFile(path);
      if (score.unmatched_note_warnings > 0) {
        logInfo(path.filename().string() + ": " + std::to_string(score.unmatched_note_warnings) +
                " unmatched note-on(s) closed at end of track");
      }
      const TokenStreams streams = encode(score, codec_config, &stats);
      for (int s = 0; s < kNumStreams; ++s) {
        for (int32_t token : streams.stream(s)) {
          seen[static_cast<size_t>(s)][static_cast<size_t>(token)] = true;
        }
      }
      fs::path out_path = fs::path(out_dir) / path.filename().replace_extension(".tokens");
      writeTokenFile(out_path, streams);
      ++encoded;
    } catch (const DataError& e) {
      failed.push_back(path.string() + ": " + e.what());
    }
  }

  json report;
  report["files_encoded"] = encoded;
  report["files_failed"] = failed;
  report["notes"] = stats.notes;
  report["max_on2on_ticks"] = stats.max_on2on;
  report["max_on2off_ticks"] = stats.max_on2off;
  report["on2on_clamped"] = stats.on2on_clamped;
  report["on2off_clamped"] = stats.on2off_clamped;
  json coverage;
  for (int s = 0; s < kNumStreams; ++s) {
    const auto& bits = seen[static_cast<size_t>(s)];
    coverage[kStreamNames[s]] = {{"used", std::count(bits.begin(), bits.end(), true)},
                                 {"vocab", bits.size()}};
  }
  report["vocabulary_coverage"] = coverage;
  writeFileAtomic(fs::path(out_dir) / "corpus_report.json", report.dump(2) + "\n");

  std::cout << "encoded " << encoded << "/" << files.size() << " files, " << stats.notes
            << " notes\n"
            << "max on2on " << stats.max_on2on << " ticks, max on2off " << stats.max_on2off
            << " ticks, clamped " << stats.on2on_clamped + stats.on2off_clamped << "\n";
  for (const auto& failure : failed) std::cout << "failed: " << failure << "\n";
  return encoded == 0 ? 2 : 0;
}

int cmdDecode(const std::string& input, const std::string& out, double tempo) {
  const TokenStreams streams = readTokenFile(input);
  CodecConfig config;
  config.ticks_per_whole = streams.ticks_per_whole;
  config.max_ticks = streams.vocab_sizes[kOn2On] - 1;
  config.default_tempo_bpm = tempo;
  const MidiScore score = decode(streams, config);
  writeMidiFile(out, score);
  std::cout << "decoded " << score.notes.size() << " notes to " << out << " at " << tempo
            << " bpm\n";
  return 0;
}

int cmdStats(const std::string& input_dir) {
  const auto corpus = loadTokenDir(input_dir);
  if (corpus.empty()) throw DataError("no token files in " + input_dir);
  int64_t notes = 0;
  int32_t max_on2on = 0, max_on2off = 0;
  std::array<std::vector<bool>, kNumStreams> seen;
  for (int s = 0; s < kNumStreams; ++s) {
    seen[static_cast<size_t>(s)].assign(
        static_cast<size_t>(corpus.front().streams.vocab_sizes[static_cast<size_t>(s)]), false);
  }
  for (const auto& file : corpus) {
    notes += static_cast<int64_t>(file.streams.size());
    for (int32_t token : file.streams.on2on) max_on2on = std::max(max_on2on, token);
    for (int32_t token : file.streams.on2off) max_on2off = std::max(max_on2off, token);
    for (int s = 0; s < kNumStreams; ++s) {
      for (int32_t token : file.streams.stream(s)) {
        auto& bits = seen[static_cast<size_t>(s)];
        if (static_cast<size_t>(token) < bits.size()) bits[static_cast<size_t>(token)] = true;
      }
    }
  }
  std::cout << "files: " << corpus.size() << "\nnotes: " << notes << "\nmax on2on: " << max_on2on
            << "\nmax on2off: " << max_on2off << "\n";
  for (int s = 0; s < kNumStreams; ++s) {
    const auto& bits = seen[static_cast<size_t>(s)];
    std::cout << kStreamNames[s] << " vocabulary used: "
              << std::count(bits.begin(), bits.end(), true) << "/" << bits.size() << "\n";
  }
  return 0;
}

template <typename S>
int runTraining(const FullConfig& config, const std::vector<TokenStreams>& train_streams,
                const std::vector<TokenStreams>& val_streams) {
  JointModel<S> model(config.model, config.train.seed);
  std::vector<const TokenStreams*> train_ptrs, val_ptrs;
  for (const auto& streams : train_streams) train_ptrs.push_back(&streams);
  for (const auto& streams : val_streams) val_ptrs.push_back(&streams);
  Trainer<S> trainer(model, train_ptrs, val_ptrs, config.train);
  trainer.run();
  std::cout << "trained " << config.train.total_steps << " steps; final total CE "
            << trainer.records().back().total << "\ncheckpoints in "
            << config.train.checkpoint_dir << "\n";
  return 0;
}

int cmdTrain(const std::string& corpus_dir, const std::string& config_path,
             const std::vector<std::string>& overrides, const std::string& out_dir) {
  FullConfig config = loadFullConfig(config_path, overrides);
  if (!out_dir.empty()) config.train.checkpoint_dir = out_dir;

  fs::path train_dir(corpus_dir);
  fs::path val_dir;
  if (fs::is_directory(fs::path(corpus_dir) / "train")) {
    train_dir = fs::path(corpus_dir) / "train";
    if (fs::is_directory(fs::path(corpus_dir) / "val")) val_dir = fs::path(corpus_dir) / "val";
  }
  std::vector<TokenStreams> train_streams, val_streams;
  for (auto& file : loadTokenDir(train_dir)) train_streams.push_back(std::move(file.streams));
  if (!val_dir.empty()) {
    for (auto& file : loadTokenDir(val_dir)) val_streams.push_back(std::move(file.streams));
  }
  if (train_streams.empty()) throw DataError("no token files in " + train_dir.string());

  if (config.train.precision == "f64") {
    return runTraining<double>(config, train_streams, val_streams);
  }
  return runTraining<float>(config, train_streams, val_streams);
}

TokenStreams defaultPrime() {
  TokenStreams prime;
  prime.push(0, 96, 60, 80);  // one middle-C quarter note
  return prime;
}

template <typename S>
int runGeneration(const std::string& checkpoint, const std::string& prime_path, int64_t notes,
                  const std::string& out, uint64_t seed, double tempo, double temperature,
                  const std::vector<int>& top_k) {
  JointModel<S> model = JointModel<S>::loadCheckpoint(checkpoint);
  SamplerConfig sampler_config;
  sampler_config.seed = seed;
  sampler_config.temperature = {temperature, temperature, temperature, temperature};
  if (!top_k.empty()) {
    if (top_k.size() != kNumStreams) {
      throw UsageError("--top-k expects 4 comma-separated values (on2on,on2off,pitch,velocity)");
    }
    for (int s = 0; s < kNumStreams; ++s) sampler_config.top_k[static_cast<size_t>(s)] = top_k[static_cast<size_t>(s)];
  }

  TokenStreams prime = defaultPrime();
  if (!prime_path.empty()) {
    const MidiScore prime_score = parseMidiFile(prime_path);
    CodecConfig codec_config;
    prime = encode(prime_score, codec_config);
    if (prime.empty()) throw DataError("prime file contains no notes: " + prime_path);
  }
  prime.vocab_sizes = model.config().vocab_sizes;

  Generator<S> generator(model, sampler_config);
  const fs::path out_path(out);
  TokenStreams result;
  if (out_path.extension() == ".tokens") {
    TokenFileWriter writer(out_path, prime);
    for (size_t i = 0; i < prime.size(); ++i) {
      writer.append(prime.on2on[i], prime.on2off[i], prime.pitch[i], prime.velocity[i]);
    }
    generator.generate(prime, notes, [&](int32_t a, int32_t b, int32_t c, int32_t d) {
      writer.append(a, b, c, d);
    });
    writer.finish();
    std::cout << "wrote " << (prime.size() + static_cast<size_t>(notes)) << " notes to " << out
              << "\n";
    return 0;
  }
  result = generator.generateCollect(prime, notes);
  CodecConfig codec_config;
  codec_config.default_tempo_bpm = tempo;
  const MidiScore score = decode(result, codec_config);
  writeMidiFile(out_path, score);
  std::cout << "wrote " << score.notes.size() << " notes to " << out << " at " << tempo
            << " bpm\n";
  return 0;
}

int cmdGenerate(const std::string& checkpoint, const std::string& prime_path, int64_t notes,
                const std::string& out, uint64_t seed, double tempo, double temperature,
                const std::vector<int>& top_k) {
  if (!fs::exists(checkpoint)) throw DataError("checkpoint not found: " + checkpoint);
  const std::string dtype = JointModel<float>::checkpointDtype(checkpoint);
  if (dtype == "f64") {
    return runGeneration<double>(checkpoint, prime_path, notes, out, seed, tempo, temperature,
                                 top_k);
  }
  return runGeneration<float>(checkpoint, prime_path, notes, out, seed, tempo, temperature,
                              top_k);
}

int cmdEval(const std::vector<std::string>& inputs, const std::string& out_dir, double window,
            int pitch_low, int pitch_high, const std::string& plot_prefix, double horizon) {
  const auto files = collectMidiInputs(inputs);
  if (files.empty()) throw DataError("no input files");
  ensureDir(out_dir);

  std::vector<MidiScore> scores;
  std::vector<DensitySeries> series;
  for (const auto& path : files) {
    scores.push_back(parseMidiFile(path));
    const DensityProfile profile = noteDensity(scores.back(), window);
    fs::path csv_path = fs::path(out_dir) / path.filename().replace_extension(".density.csv");
    writeFileAtomic(csv_path, densityCsv(profile));
    series.push_back({path.stem().string(), profile});
    std::cout << path.filename().string() << ": " << scores.back().notes.size() << " notes, "
              << profile.coveredSeconds() << " s";
    if (horizon > 0.0 && profile.coveredSeconds() >= horizon) {
      const DensityStability stability = densityStability(profile, horizon);
      std::cout << ", stability ratio " << stability.ratio;
    }
    std::cout << "\n";
  }
  const PitchHistogram histogram = pitchDistribution(scores, pitch_low, pitch_high);
  writeFileAtomic(fs::path(out_dir) / "pitch_histogram.csv", pitchCsv(histogram));

  if (!plot_prefix.empty()) {
    writeFileAtomic(fs::path(plot_prefix + "_density.svg"), densityComparisonSvg(series));
    writeFileAtomic(fs::path(plot_prefix + "_pitch.svg"), pitchHistogramSvg(histogram));
  }
  std::cout << "metrics written to " << out_dir << "\n";
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// runCli
// ---------------------------------------------------------------------------

int runCli(const std::vector<std::string>& args) {
  CLI::App app{"quartet: tempo-free 4-tuple piano music modeling"};
  app.require_subcommand(1);

  std::string input, out, config_path, prime_path, plot_prefix;
  std::vector<std::string> inputs, overrides;
  std::vector<int> top_k;
  double tempo = 120.0, window = 5.0, temperature = 1.0, horizon = 0.0;
  int pitch_low = 60, pitch_high = 71;
  int64_t notes = 0;
  uint64_t seed = 0;

  auto* encode_cmd = app.add_subcommand("encode", "MIDI directory -> token files + report");
  encode_cmd->add_option("input", input, "directory of .mid files")->required();
  encode_cmd->add_option("--out", out, "output directory")->required();

  auto* decode_cmd = app.add_subcommand("decode", "token file -> MIDI");
  decode_cmd->add_option("input", input, ".tokens file")->required();
  decode_cmd->add_option("--out", out, "output .mid path")->required();
  decode_cmd->add_option("--tempo", tempo, "decode tempo in bpm (default 120)");

  auto* stats_cmd = app.add_subcommand("stats", "token corpus statistics");
  stats_cmd->add_option("input", input, "directory of .tokens files")->required();

  auto* train_cmd = app.add_subcommand("train", "train the four stream networks");
  train_cmd->add_option("corpus", input, "token dir, or dir with train/ and val/ subdirs")
      ->required();
  train_cmd->add_option("--config", config_path, "key=value config file");
  train_cmd->add_option("--set", overrides, "config override key=value (repeatable)");
  train_cmd->add_option("--out", out, "checkpoint directory (overrides config)");

  auto* generate_cmd = app.add_subcommand("generate", "sample new music from a checkpoint");
  generate_cmd->add_option("--checkpoint", config_path, "model checkpoint")->required();
  generate_cmd->add_option("--notes", notes, "number of notes to generate")->required();
  generate_cmd->add_option("--out", out, "output .mid or .tokens path")->required();
  generate_cmd->add_option("--prime", prime_path, "priming .mid file (default: one middle C)");
  generate_cmd->add_option("--seed", seed, "sampling seed");
  generate_cmd->add_option("--tempo", tempo, "decode tempo for .mid output");
  generate_cmd->add_option("--temperature", temperature, "softmax temperature (0 = argmax)");
  generate_cmd->add_option("--top-k", top_k, "per-stream top-k, e.g. 32,32,0,0")->delimiter(',');

  auto* eval_cmd = app.add_subcommand("eval", "density and pitch metrics -> CSV");
  eval_cmd->add_option("inputs", inputs, ".mid files or directories")->required();
  eval_cmd->add_option("--out", out, "output directory")->required();
  eval_cmd->add_option("--window", window, "density window in seconds (default 5)");
  eval_cmd->add_option("--pitch-low", pitch_low, "histogram range low (default 60)");
  eval_cmd->add_option("--pitch-high", pitch_high, "histogram range high (default 71)");
  eval_cmd->add_option("--plot", plot_prefix, "also write <prefix>_density.svg and _pitch.svg");
  eval_cmd->add_option("--horizon", horizon, "report stability over this many seconds");

  std::vector<std::string> cli_args(args);
  try {
    std::vector<const char*> argv;
    argv.push_back("quartet");
    for (const auto& arg : cli_args) argv.push_back(arg.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (encode_cmd->parsed()) return cmdEncode(input, out);
    if (decode_cmd->parsed()) return cmdDecode(input, out, tempo);
    if (stats_cmd->parsed()) return cmdStats(input);
    if (train_cmd->parsed()) return cmdTrain(input, config_path, overrides, out);
    if (generate_cmd->parsed()) {
      return cmdGenerate(config_path, prime_path, notes, out, seed, tempo, temperature, top_k);
    }
    if (eval_cmd->parsed()) {
      return cmdEval(inputs, out, window, pitch_low, pitch_high, plot_prefix, horizon);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace quartet
