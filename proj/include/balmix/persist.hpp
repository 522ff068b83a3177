#pragma once

// On-disk formats.
//
// Checkpoint directory:
//   checkpoint.json  sidecar: format tag, shapes, activation, seed, epoch,
//                    monitored metric and its value
//   params.txt       text tensor dump. For each of w1, b1, w2, b2 in order:
//                    a line "<name> <rows> <cols>" followed by <rows> lines of
//                    <cols> space-separated %.17g values (biases are cols = 1).
//
// EvalReport JSON: one object per metric under its fixed key, each holding
// `value`, `boot_mean` and `boot_std` (null when undefined or not computed),
// plus `confusion_matrix` (row = truth) and `boot_resamples`.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "balmix/error.hpp"
#include "balmix/metrics.hpp"
#include "balmix/model.hpp"

namespace balmix {

using json = nlohmann::json;

inline constexpr const char* kCheckpointFormat = "balmix-checkpoint/1";

inline std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ParameterError("unknown activation '" + s + "'");
}

namespace detail {

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <typename M>
void write_tensor(std::ostream& out, const char* name, const M& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      out << (c ? " " : "") << buf;
    }
    out << '\n';
  }
}

inline Matrix read_tensor(std::istream& in, const std::string& expected, const std::string& source) {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  if (!(in >> name >> rows >> cols) || name != expected || rows < 0 || cols < 0)
    throw IngestionError(source + ": expected tensor header for " + expected);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::string tok;
      if (!(in >> tok)) throw IngestionError(source + ": truncated tensor " + expected);
      char* end = nullptr;
      m(r, c) = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) throw IngestionError(source + ": malformed value in " + expected);
    }
  return m;
}

}  // namespace detail

inline json to_json(const EvalReport& report) {
  json j;
  for (auto id : kAllMetrics) {
    const auto& m = report[id];
    j[std::string(metric_name(id))] = {
        {"value", detail::optional_number(m.value)},
        {"boot_mean", m.boot ? json(m.boot->mean) : json(nullptr)},
        {"boot_std", m.boot ? json(m.boot->std) : json(nullptr)},
    };
  }
  json cm = json::array();
  const auto k = report.confusion.num_classes();
  for (std::size_t i = 0; i < k; ++i) {
    json row = json::array();
    for (std::size_t c = 0; c < k; ++c) row.push_back(report.confusion(i, c));
    cm.push_back(row);
  }
  j["confusion_matrix"] = cm;
  std::size_t resamples = 0;
  for (const auto& m : report.metrics)
    if (m.boot) resamples = std::max(resamples, m.boot->n_resamples + m.boot->n_skipped);
  j["boot_resamples"] = resamples;
  return j;
}

struct CheckpointMeta {
  std::uint64_t seed = 0;
  MetricId monitor = MetricId::balanced_acc;
};

inline void save_checkpoint(const Checkpoint& ckpt, const CheckpointMeta& meta, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& p = ckpt.params;
  json side = {
      {"format", kCheckpointFormat},
      {"input_dim", p.input_dim()},
      {"hidden", p.hidden()},
      {"num_classes", p.num_classes()},
      {"activation", activation_name(p.activation)},
      {"seed", meta.seed},
      {"epoch", ckpt.epoch},
      {"monitor", std::string(metric_name(meta.monitor))},
      {"val_metric", ckpt.val_metric},
      {"data_file", "params.txt"},
      {"tensors", {"w1", "b1", "w2", "b2"}},
  };
  std::ofstream sj(dir / "checkpoint.json");
  sj << side.dump(2) << '\n';
  std::ofstream st(dir / "params.txt");
  detail::write_tensor(st, "w1", p.w1);
  detail::write_tensor(st, "b1", p.b1);
  detail::write_tensor(st, "w2", p.w2);
  detail::write_tensor(st, "b2", p.b2);
  if (!sj || !st) throw IngestionError(dir.string() + ": failed to write checkpoint");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir, CheckpointMeta* meta = nullptr) {
  std::ifstream sj(dir / "checkpoint.json");
  if (!sj) throw IngestionError((dir / "checkpoint.json").string() + ": cannot open file");
  json side;
  try {
    sj >> side;
  } catch (const json::exception& e) {
    throw IngestionError((dir / "checkpoint.json").string() + ": " + e.what());
  }
  if (side.value("format", "") != kCheckpointFormat) throw IngestionError("unsupported checkpoint format");
  const auto source = (dir / "params.txt").string();
  std::ifstream st(dir / "params.txt");
  if (!st) throw IngestionError(source + ": cannot open file");
  Checkpoint ckpt;
  ckpt.params.activation = parse_activation(side.at("activation").get<std::string>());
  ckpt.params.w1 = detail::read_tensor(st, "w1", source);
  ckpt.params.b1 = detail::read_tensor(st, "b1", source);
  ckpt.params.w2 = detail::read_tensor(st, "w2", source);
  ckpt.params.b2 = detail::read_tensor(st, "b2", source);
  if (ckpt.params.input_dim() != side.at("input_dim").get<std::size_t>() ||
      ckpt.params.hidden() != side.at("hidden").get<std::size_t>() ||
      ckpt.params.num_classes() != side.at("num_classes").get<std::size_t>())
    throw IngestionError(source + ": tensor shapes disagree with sidecar");
  ckpt.epoch = side.at("epoch").get<std::size_t>();
  ckpt.val_metric = side.at("val_metric").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                    : side.at("val_metric").get<double>();
  if (meta) {
    meta->seed = side.at("seed").get<std::uint64_t>();
    meta->monitor = parse_metric(side.at("monitor").get<std::string>());
  }
  return ckpt;
}

}  // namespace balmix
