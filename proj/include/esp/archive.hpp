#pragma once

// Run archives: one directory per run holding the resolved config, the
// per-episode series, the returned policy, the last Predictor and a manifest
// of SHA-256 content hashes. Nothing machine- or time-dependent is stored, so
// a repeated run yields byte-identical files.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "esp/config.hpp"
#include "esp/error.hpp"
#include "esp/metrics.hpp"
#include "esp/predictors.hpp"

namespace esp {

inline constexpr int kArchiveVersion = 1;
inline constexpr std::uint32_t kPredictorFormatVersion = 1;

struct ArchivedRun {
  ExperimentConfig config;
  RunResult result;
  std::filesystem::path path;
};

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw Error("malformed number '" + std::string(s) + "'");
  return v;
}

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Genomes as JSON.

inline nlohmann::json genome_to_json(const NetworkGenome& g) {
  return {{"layer_sizes", g.layer_sizes},
          {"hidden_activation", to_string(g.hidden_activation)},
          {"output_activation", to_string(g.output_activation)},
          {"weights", g.weights},
          {"biases", g.biases}};
}

inline NetworkGenome genome_from_json(const nlohmann::json& j) {
  NetworkGenome g;
  try {
    g.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    g.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
    g.output_activation = activation_from_string(j.at("output_activation").get<std::string>());
    g.weights = j.at("weights").get<std::vector<double>>();
    g.biases = j.at("biases").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed genome: ") + e.what());
  }
  validate(g);
  return g;
}

// ---------------------------------------------------------------------------
// Predictor binary format, little-endian:
//   "ESPP" u32 version, u8 kind, f64 offset, f64 scale, then
//   mlp:    u8 hidden_act, u8 output_act, u64 n_sizes, u64 sizes[], f64 weights[], f64 biases[]
//   forest: u64 input_dim, u64 n_trees, per tree u64 n_nodes and per node
//           i32 feature, f64 threshold, i32 left, i32 right, f64 value

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  // Guards allocations driven by counts read from the file.
  std::size_t count(std::size_t min_bytes_each) {
    const std::uint64_t n = u64();
    if (min_bytes_each > 0 && n > (data_.size() - pos_) / min_bytes_each) throw Error("predictor file is truncated");
    return static_cast<std::size_t>(n);
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error("predictor file is truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::uint8_t activation_code(Activation a) { return static_cast<std::uint8_t>(a); }

inline Activation activation_from_code(std::uint8_t c) {
  if (c > static_cast<std::uint8_t>(Activation::argmax)) throw Error("unknown activation code in predictor file");
  return static_cast<Activation>(c);
}

}  // namespace detail

inline std::string serialize_predictor(const PredictorModel& m) {
  detail::ByteWriter w;
  w.bytes("ESPP");
  w.u32(kPredictorFormatVersion);
  w.u8(m.kind() == PredictorKind::mlp ? 0 : 1);
  w.f64(m.scaling().offset);
  w.f64(m.scaling().scale);
  if (m.kind() == PredictorKind::mlp) {
    const auto& g = m.network();
    w.u8(detail::activation_code(g.hidden_activation));
    w.u8(detail::activation_code(g.output_activation));
    w.u64(g.layer_sizes.size());
    for (auto s : g.layer_sizes) w.u64(s);
    for (double v : g.weights) w.f64(v);
    for (double v : g.biases) w.f64(v);
  } else {
    const auto& f = m.forest();
    w.u64(f.input_dim());
    w.u64(f.trees().size());
    for (const auto& t : f.trees()) {
      w.u64(t.nodes().size());
      for (const auto& n : t.nodes()) {
        w.i32(n.feature);
        w.f64(n.threshold);
        w.i32(n.left);
        w.i32(n.right);
        w.f64(n.value);
      }
    }
  }
  return w.take();
}

inline PredictorModel deserialize_predictor(std::string_view data) {
  detail::ByteReader r(data);
  if (r.bytes(4) != "ESPP") throw Error("not a predictor file");
  if (const auto v = r.u32(); v != kPredictorFormatVersion)
    throw Error("unsupported predictor format version " + std::to_string(v));
  const std::uint8_t kind = r.u8();
  TargetScaling scaling;
  scaling.offset = r.f64();
  scaling.scale = r.f64();
  PredictorModel model;
  if (kind == 0) {
    NetworkGenome g;
    g.hidden_activation = detail::activation_from_code(r.u8());
    g.output_activation = detail::activation_from_code(r.u8());
    g.layer_sizes.resize(r.count(8));
    for (auto& s : g.layer_sizes) s = static_cast<std::size_t>(r.u64());
    validate_layer_sizes(g.layer_sizes);
    g.weights.resize(expected_weight_count(g.layer_sizes));
    g.biases.resize(expected_bias_count(g.layer_sizes));
    for (auto& v : g.weights) v = r.f64();
    for (auto& v : g.biases) v = r.f64();
    model = PredictorModel(std::move(g), scaling);
  } else if (kind == 1) {
    const auto input_dim = static_cast<std::size_t>(r.u64());
    std::vector<RegressionTree> trees(r.count(8));
    for (auto& t : trees) {
      std::vector<TreeNode> nodes(r.count(28));
      for (auto& n : nodes) {
        n.feature = r.i32();
        n.threshold = r.f64();
        n.left = r.i32();
        n.right = r.i32();
        n.value = r.f64();
        if (n.feature >= static_cast<std::int32_t>(input_dim)) throw Error("tree node feature out of range");
      }
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        if (n.is_leaf()) continue;
        const auto ok = [&](std::int32_t c) {
          return c > static_cast<std::int32_t>(i) && static_cast<std::size_t>(c) < nodes.size();
        };
        if (!ok(n.left) || !ok(n.right)) throw Error("tree node child index out of range");
      }
      if (nodes.empty()) throw Error("empty tree in predictor file");
      t = RegressionTree(std::move(nodes));
    }
    model = PredictorModel(RandomForest(std::move(trees), input_dim), scaling);
  } else {
    throw Error("unknown predictor kind in predictor file");
  }
  if (!r.done()) throw Error("trailing bytes in predictor file");
  return model;
}

// ---------------------------------------------------------------------------
// Series CSV.

inline constexpr std::string_view kSeriesHeader = "episodes_consumed,true_performance,regret,generation,reward";

inline std::string series_to_csv(const std::vector<SeriesPoint>& series) {
  std::string out(kSeriesHeader);
  out += '\n';
  for (const auto& p : series) {
    out += std::to_string(p.episodes_consumed) + ',' + format_double(p.true_performance) + ',' +
           format_double(p.regret) + ',' + std::to_string(p.generation) + ',' + format_double(p.reward) + '\n';
  }
  return out;
}

inline std::vector<SeriesPoint> series_from_csv(std::string_view text) {
  std::vector<SeriesPoint> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line_no == 1) {
      if (line != kSeriesHeader) throw Error("series.csv: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    for (std::size_t start = 0;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 5) throw Error("series.csv:" + std::to_string(line_no) + ": expected 5 columns");
    SeriesPoint p;
    p.episodes_consumed = static_cast<std::size_t>(parse_double(cells[0]));
    p.true_performance = parse_double(cells[1]);
    p.regret = parse_double(cells[2]);
    p.generation = static_cast<std::size_t>(parse_double(cells[3]));
    p.reward = parse_double(cells[4]);
    if (!out.empty() && p.episodes_consumed <= out.back().episodes_consumed)
      throw Error("series.csv:" + std::to_string(line_no) + ": episode counts must increase");
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Whole archives.

inline std::string archive_name(const RunResult& r) {
  return std::string(to_string(r.domain)) + "-" + std::string(to_string(r.method)) + "-seed" + std::to_string(r.seed);
}

/// The files of one archive, keyed by name, in a fixed order.
inline std::vector<std::pair<std::string, std::string>> archive_files(const ExperimentConfig& config,
                                                                     const RunResult& run) {
  ExperimentConfig resolved = config;
  resolved.esp.seed = run.seed;
  resolved.esp.method = run.method;
  // An archive describes exactly this run, wherever it was written.
  resolved.run_count = 1;
  resolved.output_dir = ".";
  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back("config.json", dump_config(resolved));
  files.emplace_back("series.csv", series_to_csv(run.series));
  files.emplace_back("best_policy.json", genome_to_json(run.best_policy).dump(2) + "\n");
  if (run.predictor) files.emplace_back("predictor.bin", serialize_predictor(*run.predictor));

  nlohmann::json manifest;
  manifest["archive_version"] = kArchiveVersion;
  manifest["run"] = {{"method", to_string(run.method)},
                     {"domain", to_string(run.domain)},
                     {"seed", run.seed},
                     {"generations", run.generations},
                     {"episodes_consumed", run.episodes_consumed()},
                     {"final_performance", run.final_performance()},
                     {"target_reached_at", run.target_reached_at ? nlohmann::json(*run.target_reached_at)
                                                                 : nlohmann::json(nullptr)}};
  nlohmann::json hashes = nlohmann::json::object();
  for (const auto& [name, data] : files) hashes[name] = sha256_hex(data);
  manifest["sha256"] = hashes;
  files.emplace_back("manifest.json", manifest.dump(2) + "\n");
  return files;
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.close();
  if (!out) throw Error("cannot write " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Writes the archive under out_dir/<domain>-<method>-seed<seed>, replacing
/// any previous one. Files go to a temporary sibling first and appear in
/// one rename.
inline std::filesystem::path write_archive(const std::filesystem::path& out_dir, const ExperimentConfig& config,
                                           const RunResult& run) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path final_path = out_dir / archive_name(run);
  const fs::path tmp = out_dir / (".tmp-" + archive_name(run));
  fs::remove_all(tmp);
  fs::create_directory(tmp);
  for (const auto& [name, data] : archive_files(config, run)) write_file(tmp / name, data);
  std::error_code ec;
  fs::remove_all(final_path, ec);
  fs::rename(tmp, final_path);
  return final_path;
}

inline bool is_archive(const std::filesystem::path& dir) {
  return std::filesystem::is_regular_file(dir / "manifest.json");
}

inline ArchivedRun load_archive(const std::filesystem::path& dir) {
  ArchivedRun a;
  a.path = dir;
  const auto manifest_text = read_file(dir / "manifest.json");
  const auto manifest = nlohmann::json::parse(manifest_text, nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object()) throw Error(dir.string() + ": malformed manifest.json");
  if (manifest.value("archive_version", 0) != kArchiveVersion)
    throw Error(dir.string() + ": unsupported archive version");
  std::map<std::string, std::string> data;
  for (const auto& [name, hash] : manifest.at("sha256").items()) {
    data[name] = read_file(dir / name);
    if (sha256_hex(data[name]) != hash.get<std::string>())
      throw Error((dir / name).string() + ": content hash mismatch");
  }
  for (const char* required : {"config.json", "series.csv", "best_policy.json"})
    if (!data.count(required)) throw Error(dir.string() + ": manifest lacks " + required);

  a.config = resolve_config(data["config.json"], (dir / "config.json").string());
  auto& r = a.result;
  try {
    const auto& run = manifest.at("run");
    r.method = method_from_string(run.at("method").get<std::string>());
    r.domain = domain_from_string(run.at("domain").get<std::string>());
    r.seed = run.at("seed").get<std::uint64_t>();
    r.generations = run.at("generations").get<std::size_t>();
    if (!run.at("target_reached_at").is_null()) r.target_reached_at = run.at("target_reached_at").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(dir.string() + ": malformed manifest.json: " + e.what());
  }
  r.series = series_from_csv(data["series.csv"]);
  r.best_policy = genome_from_json(nlohmann::json::parse(data["best_policy.json"]));
  if (data.count("predictor.bin")) r.predictor = deserialize_predictor(data["predictor.bin"]);
  return a;
}

/// Archives directly under `dir`, sorted by directory name.
inline std::vector<std::filesystem::path> find_archives(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_directory() && entry.path().filename().string().rfind(".tmp-", 0) != 0 && is_archive(entry.path()))
      out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace esp
