// Copyright (c) 2026, The syncdpo-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "checkpoint.hpp"
#include "evaluate.hpp"
#include "negatives.hpp"
#include "prefloss.hpp"
#include "trainer.hpp"

namespace syncdpo::harness {

namespace fs = std::filesystem;

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RunSummary load_run_summary(const fs::path& run_dir) {
  const fs::path mpath = run_dir / "manifest.json";
  std::ifstream f(mpath);
  if (!f) fail(ErrorCode::Io, "missing manifest '" + mpath.string() + "'");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, "malformed manifest '" + mpath.string() + "': " + e.what());
  }
  const auto rows = read_metrics_csv(run_dir / "metrics.csv");
  if (rows.empty()) fail(ErrorCode::Format, "empty metrics file in '" + run_dir.string() + "'");
  const MetricsRow& last = rows.back();

  RunSummary s;
  s.run_dir = run_dir.string();
  try {
    s.label = m.at("label").get<std::string>();
    s.method = m.at("method").get<std::string>();
    s.seed = m.at("seed").get<std::uint64_t>();
    s.steps = m.at("steps").get<std::int64_t>();
    s.sampler_calls = m.at("sampler_calls").get<std::int64_t>();
    s.wall_time_per_step = m.at("wall_time_per_step").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, "incomplete manifest '" + mpath.string() + "': " + e.what());
  }
  s.val_fm_loss = last.val_fm_loss;
  s.mean_abs_offset = last.mean_abs_offset;
  s.mean_score = last.mean_score;
  return s;
}

namespace {

std::string num(double v, int prec = 6) {
  if (std::isnan(v)) return "nan";
  std::ostringstream ss;
  ss.precision(prec);
  ss << v;
  return ss.str();
}

}  // namespace

ComparisonReport compare_runs(std::span<const fs::path> run_dirs) {
  require(run_dirs.size() >= 2, "compare needs at least 2 run directories");
  ComparisonReport rep;
  std::map<std::string, std::vector<RunSummary>> groups;
  std::vector<std::string> order;
  for (const auto& d : run_dirs) {
    RunSummary s = load_run_summary(d);
    if (!groups.count(s.label)) order.push_back(s.label);
    groups[s.label].push_back(s);
    rep.rows.push_back({"run", s, 1});
  }
  for (const auto& label : order) {
    const auto& g = groups[label];
    auto med = [&](auto field) {
      std::vector<double> v;
      for (const auto& s : g) v.push_back(static_cast<double>(s.*field));
      return median(std::move(v));
    };
    RunSummary m;
    m.label = label;
    m.method = g.front().method;
    m.steps = static_cast<std::int64_t>(med(&RunSummary::steps));
    m.val_fm_loss = med(&RunSummary::val_fm_loss);
    m.mean_abs_offset = med(&RunSummary::mean_abs_offset);
    m.mean_score = med(&RunSummary::mean_score);
    m.sampler_calls = static_cast<std::int64_t>(med(&RunSummary::sampler_calls));
    m.wall_time_per_step = med(&RunSummary::wall_time_per_step);
    rep.rows.push_back({"median", m, static_cast<int>(g.size())});
  }

  const std::vector<std::string> header = {"kind",        "label",           "method",     "seed",
                                           "runs",        "steps",           "val_fm_loss", "mean_abs_offset",
                                           "mean_score",  "sampler_calls",   "wall_time_per_step", "run_dir"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rep.rows) {
    const auto& s = r.run;
    cells.push_back({r.kind, s.label, s.method, r.kind == "run" ? std::to_string(s.seed) : "",
                     std::to_string(r.runs), std::to_string(s.steps), num(s.val_fm_loss), num(s.mean_abs_offset),
                     num(s.mean_score), std::to_string(s.sampler_calls), num(s.wall_time_per_step, 4), s.run_dir});
  }

  std::ostringstream csv;
  for (std::size_t i = 0; i < header.size(); ++i) csv << (i ? "," : "") << header[i];
  csv << '\n';
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
    csv << '\n';
  }
  rep.csv = csv.str();

  // Text table omits the run_dir column.
  const std::size_t cols = header.size() - 1;
  std::vector<std::size_t> width(cols);
  for (std::size_t i = 0; i < cols; ++i) {
    width[i] = header[i].size();
    for (const auto& row : cells) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream txt;
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < cols; ++i) {
      txt << row[i] << std::string(width[i] - row[i].size(), ' ');
      if (i + 1 < cols) txt << "  ";
    }
    txt << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  txt << std::string(total - 2, '-') << '\n';
  for (const auto& row : cells) line(row);
  rep.text = txt.str();
  return rep;
}

GradNormSummary diag_gradnorm(const fs::path& ckpt_path, std::int64_t n, std::uint64_t seed, const fs::path& csv_out,
                              const fs::path& ref_ckpt) {
  require(n >= 1, "diag-gradnorm needs n >= 1");
  const flow::Checkpoint ckpt = flow::load_checkpoint(ckpt_path);
  const toyworld::GridSpec grid = grid_from_checkpoint(ckpt);
  const auto model = flow::model_from_checkpoint(ckpt, true);

  fs::path ref_path = ref_ckpt;
  if (ref_path.empty() && ckpt.config.contains("init_ckpt")) {
    const auto recorded = ckpt.config["init_ckpt"].get<std::string>();
    if (!recorded.empty() && fs::exists(recorded)) ref_path = recorded;
  }
  flow::VelocityNet<float> ref = model;
  if (!ref_path.empty()) {
    ref = flow::model_from_checkpoint(flow::load_checkpoint(ref_path), true);
    require(ref.arch() == model.arch(), "reference architecture differs from the model");
  }
  ref.freeze();

  const toyworld::Dataset pool = toyworld::generate_dataset(derive_seed(seed, 7), std::max<std::int64_t>(n, 2), grid);
  Rng rng(derive_seed(seed, 8));

  if (csv_out.has_parent_path()) fs::create_directories(csv_out.parent_path());
  std::ofstream f(csv_out);
  if (!f) fail(ErrorCode::Io, "cannot write '" + csv_out.string() + "'");
  f.precision(9);
  f << "sample_index,ratio,z,winner_mse\n";

  GradNormSummary s;
  s.n = n;
  std::vector<double> ratios;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& parent = pool.pairs[static_cast<std::size_t>(i)];
    const auto neg = negatives::perturb_replace(parent, pool.pairs, i, rng);
    flow::Mat<float> w = flow::pack(parent);
    flow::Mat<float> l = flow::pack(neg.pair);
    flow::Mat<float> y = Eigen::Map<const flow::Vec<float>>(parent.condition.data(),
                                                            static_cast<Eigen::Index>(parent.condition.size()));
    const auto batch = pref::make_preference_batch(std::move(w), std::move(l), std::move(y), rng);
    const auto r = pref::grad_norm_ratio(model, ref, batch);
    if (r.degenerate) {
      ++s.degenerate;
      f << i << ",nan," << r.z << ',' << r.winner_mse << '\n';
      continue;
    }
    ratios.push_back(r.ratio);
    f << i << ',' << r.ratio << ',' << r.z << ',' << r.winner_mse << '\n';
  }
  s.valid = static_cast<std::int64_t>(ratios.size());
  if (!ratios.empty()) {
    double sum = 0.0;
    std::int64_t above = 0;
    for (double r : ratios) {
      sum += r;
      above += r > 1.0;
    }
    s.mean = sum / static_cast<double>(ratios.size());
    s.fraction_above_one = static_cast<double>(above) / static_cast<double>(ratios.size());
    s.median = median(ratios);
  } else {
    s.median = s.mean = s.fraction_above_one = std::numeric_limits<double>::quiet_NaN();
  }

  fs::path summary_path = csv_out;
  summary_path.replace_extension(".summary.json");
  std::ofstream sj(summary_path);
  if (!sj) fail(ErrorCode::Io, "cannot write '" + summary_path.string() + "'");
  sj << nlohmann::json{{"checkpoint", ckpt_path.string()},
                       {"reference", ref_path.empty() ? std::string("self") : ref_path.string()},
                       {"n", s.n},
                       {"valid", s.valid},
                       {"degenerate", s.degenerate},
                       {"median", s.median},
                       {"mean", s.mean},
                       {"fraction_gt_1", s.fraction_above_one}}
            .dump(2)
     << '\n';
  return s;
}

fs::path plot_run(const fs::path& run_dir) {
  const auto rows = read_metrics_csv(run_dir / "metrics.csv");
  require(!rows.empty(), "no metric rows to plot");
  struct Series {
    const char* name;
    double MetricsRow::*field;
    const char* color;
  };
  const Series series[] = {{"val_fm_loss", &MetricsRow::val_fm_loss, "#1f77b4"},
                           {"mean_abs_offset", &MetricsRow::mean_abs_offset, "#d62728"},
                           {"mean_score", &MetricsRow::mean_score, "#2ca02c"}};
  constexpr double W = 360, H = 220, pad = 40;
  const double max_step = std::max<double>(1.0, static_cast<double>(rows.back().step));

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 3 * W << "\" height=\"" << H << "\">\n";
  for (std::size_t k = 0; k < std::size(series); ++k) {
    const auto& s = series[k];
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : rows)
      if (std::isfinite(r.*s.field)) {
        lo = std::min(lo, r.*s.field);
        hi = std::max(hi, r.*s.field);
      }
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) hi = lo + 1;
    const double x0 = k * W;
    svg << "<g><rect x=\"" << x0 + pad << "\" y=\"" << pad / 2 << "\" width=\"" << W - 1.5 * pad << "\" height=\""
        << H - 1.5 * pad << "\" fill=\"none\" stroke=\"#888\"/>\n";
    svg << "<text x=\"" << x0 + pad << "\" y=\"14\" font-size=\"12\">" << s.name << " [" << num(lo, 4) << ", "
        << num(hi, 4) << "] vs step</text>\n<polyline fill=\"none\" stroke=\"" << s.color << "\" points=\"";
    for (const auto& r : rows) {
      if (!std::isfinite(r.*s.field)) continue;
      const double px = x0 + pad + (W - 1.5 * pad) * static_cast<double>(r.step) / max_step;
      const double py = pad / 2 + (H - 1.5 * pad) * (1.0 - (r.*s.field - lo) / (hi - lo));
      svg << px << ',' << py << ' ';
    }
    svg << "\"/></g>\n";
  }
  svg << "</svg>\n";
  const fs::path out = run_dir / "plot.svg";
  std::ofstream f(out);
  if (!f) fail(ErrorCode::Io, "cannot write '" + out.string() + "'");
  f << svg.str();
  return out;
}

}  // namespace syncdpo::harness
