#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "satfuse/config.hpp"
#include "satfuse/csv.hpp"
#include "satfuse/dataset.hpp"
#include "satfuse/error.hpp"
#include "satfuse/eval.hpp"
#include "satfuse/features.hpp"
#include "satfuse/io.hpp"
#include "satfuse/model.hpp"
#include "satfuse/ranking.hpp"

namespace satfuse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

// ---------------------------------------------------------------------------
// Tabular file formats
// ---------------------------------------------------------------------------

/// Feature CSV: header of feature names then `label`; one row per patch.
struct FeatureTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;

  /// Column-major copy, for ranking.
  std::vector<std::vector<double>> columns() const {
    std::vector<std::vector<double>> cols(names.size(), std::vector<double>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < names.size(); ++j) cols[j][i] = rows[i][j];
    return cols;
  }

  /// Rows restricted to `wanted`, in that order.
  std::vector<std::vector<double>> project(const std::vector<std::string>& wanted) const {
    std::vector<std::size_t> idx;
    for (const auto& w : wanted) {
      auto it = std::find(names.begin(), names.end(), w);
      if (it == names.end()) throw Error(ErrorKind::Config, "feature '" + w + "' missing from feature CSV");
      idx.push_back(static_cast<std::size_t>(it - names.begin()));
    }
    std::vector<std::vector<double>> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (auto j : idx) out[i].push_back(rows[i][j]);
    return out;
  }
};

inline void write_features(const std::filesystem::path& path, const std::vector<std::string>& names,
                           const std::vector<std::vector<double>>& rows, std::span<const std::uint8_t> labels) {
  std::string out;
  for (const auto& n : names) out += n + ",";
  out += "label\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (double v : rows[i]) out += io::format_real(v) + ",";
    out += std::to_string(labels[i]) + "\n";
  }
  io::atomic_write(path, out);
}

inline FeatureTable read_features(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  require(!table.header.empty() && table.header.back() == "label", ErrorKind::Format,
          path.string() + ": last column must be 'label'");
  FeatureTable ft;
  ft.names.assign(table.header.begin(), table.header.end() - 1);
  ft.rows.reserve(table.rows.size());
  for (const auto& r : table.rows) {
    std::vector<double> v;
    v.reserve(ft.names.size());
    for (std::size_t j = 0; j < ft.names.size(); ++j) v.push_back(io::parse_real(r[j]));
    ft.rows.push_back(std::move(v));
    ft.labels.push_back(static_cast<int>(parse_integer(r.back(), "label")));
  }
  return ft;
}

/// Prediction CSV: index, predicted, then one probability column per class.
inline void write_predictions(const std::filesystem::path& path, const nn::Tensor<float>& probs) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  const auto pred = model::argmax_rows(probs);
  std::string out = "index,predicted";
  for (std::size_t c = 0; c < k; ++c) out += ",p" + std::to_string(c);
  out += "\n";
  for (std::size_t i = 0; i < n; ++i) {
    out += std::to_string(i) + "," + std::to_string(pred[i]);
    for (std::size_t c = 0; c < k; ++c) out += "," + io::format_real(static_cast<double>(probs[i * k + c]));
    out += "\n";
  }
  io::atomic_write(path, out);
}

inline std::vector<int> read_predictions(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto col = table.column("predicted");
  std::vector<int> out;
  out.reserve(table.rows.size());
  for (const auto& r : table.rows) out.push_back(static_cast<int>(parse_integer(r[col], "predicted")));
  return out;
}

inline void check_alignment(const FeatureTable& ft, const LabeledSet& set, const std::string& what) {
  require(ft.rows.size() == set.size(), ErrorKind::Argument,
          what + ": " + std::to_string(ft.rows.size()) + " feature rows for " + std::to_string(set.size()) + " patches");
  for (std::size_t i = 0; i < set.size(); ++i)
    if (ft.labels[i] != set.label(i))
      throw Error(ErrorKind::Argument, what + ": label mismatch at row " + std::to_string(i));
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct ConvertArgs {
  std::string in, out, labels;
  int height = kPatchSize, width = kPatchSize, channels = kChannels;
};

inline int run_convert(const ConvertArgs& a, std::ostream& out) {
  LabeledSet set;
  if (!a.labels.empty()) {
    auto text = [](const std::string& p) {
      auto b = io::read_file(p);
      return std::string(b.begin(), b.end());
    };
    set = parse_csv_patches(text(a.in), text(a.labels), a.height, a.width, a.channels);
  } else {
    set = parse_rawsat(io::read_file(a.in));
  }
  write_satbin(set, a.out);
  out << "wrote " << set.size() << " patches, " << set.num_classes() << " classes to " << a.out << "\n";
  return kExitOk;
}

struct SynthArgs {
  std::string out;
  int classes = 4;
  int per_class = 0;
  std::uint64_t seed = 1;
};

inline int run_synth(const SynthArgs& a, std::ostream& out) {
  const auto set = synth_generate(a.per_class, a.classes, a.seed);
  write_satbin(set, a.out);
  out << "wrote " << set.size() << " synthetic patches to " << a.out << "\n";
  return kExitOk;
}

struct ExtractArgs {
  std::string in, out, ranking;
  bool all = false, selected = false;
  int threads = 1;
};

inline int run_extract(const ExtractArgs& a, std::ostream& out) {
  const auto set = read_satbin(a.in);
  std::vector<std::string> names;
  if (!a.ranking.empty()) {
    const auto t = csv::read(a.ranking);
    const auto f = t.column("feature"), s = t.column("selected");
    for (const auto& r : t.rows)
      if (r[s] == "1") names.push_back(r[f]);
    require(!names.empty(), ErrorKind::Degenerate, "ranking selects no features");
  } else if (a.selected) {
    names = features::selected_names();
  } else {
    names = features::catalog();
  }
  const auto rows = features::extract_rows(set, features::catalog_indices(names), a.threads);
  write_features(a.out, names, rows, set.labels());
  out << "extracted " << names.size() << " features for " << set.size() << " patches (catalog v"
      << features::kCatalogVersion << ") to " << a.out << "\n";
  return kExitOk;
}

struct RankArgs {
  std::string features, out;
  double threshold = ranking::kDefaultThreshold;
};

inline int run_rank(const RankArgs& a, std::ostream& out) {
  const auto ft = read_features(a.features);
  require(!ft.labels.empty(), ErrorKind::Degenerate, "feature CSV has no rows");
  const int k = *std::max_element(ft.labels.begin(), ft.labels.end()) + 1;
  const auto table = ranking::rank_features(ft.columns(), ft.names, ft.labels, k, a.threshold);
  std::string text = "rank,feature,delta_mean,delta_sigma,d_s,selected\n";
  for (std::size_t i = 0; i < table.entries.size(); ++i) {
    const auto& e = table.entries[i];
    text += std::to_string(i + 1) + "," + e.feature + "," + io::format_real(e.delta_mean) + "," +
            io::format_real(e.delta_sigma) + "," + io::format_real(e.d_s) + "," + (table.selected(e) ? "1" : "0") +
            "\n";
  }
  io::atomic_write(a.out, text);
  out << "ranked " << table.entries.size() << " features, " << table.selected_features().size()
      << " selected at threshold " << a.threshold << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string train, test, features_train, features_test, config, out, report;
};

inline int run_train(const TrainArgs& a, std::ostream& out) {
  model::ModelConfig cfg;
  std::optional<KeyValueConfig> file;
  if (!a.config.empty()) {
    file = KeyValueConfig::load(a.config);
    cfg.apply(*file);
  }
  const auto train_set = read_satbin(a.train);
  const auto test_set = read_satbin(a.test);
  require(train_set.num_classes() == test_set.num_classes(), ErrorKind::Argument,
          "train and test sets disagree on the number of classes");
  cfg.num_classes = train_set.num_classes();
  cfg.input_height = train_set.height();
  cfg.input_width = train_set.width();
  cfg.input_channels = train_set.channels();

  const bool have_features = !a.features_train.empty();
  FeatureTable ftr, fte;
  if (have_features) {
    ftr = read_features(a.features_train);
    fte = read_features(a.features_test);
    check_alignment(ftr, train_set, "features-train");
    check_alignment(fte, test_set, "features-test");
    require(ftr.names == fte.names, ErrorKind::Argument, "train and test feature CSVs have different columns");
    if (!file || !file->has("fused_feature_width")) cfg.fused_feature_width = static_cast<int>(ftr.names.size());
    require(cfg.fused_feature_width == 0 || static_cast<std::size_t>(cfg.fused_feature_width) == ftr.names.size(),
            ErrorKind::Config,
            "fused_feature_width = " + std::to_string(cfg.fused_feature_width) + " but feature CSV has " +
                std::to_string(ftr.names.size()) + " columns");
  } else {
    require(!file || !file->has("fused_feature_width") || cfg.fused_feature_width == 0, ErrorKind::Config,
            "fused_feature_width > 0 needs --features-train/--features-test");
    cfg.fused_feature_width = 0;
  }
  cfg.validate();
  out << "# effective config\n" << cfg.to_kv().to_string();

  model::TrainedModel<float> m(cfg);
  const std::vector<std::string> names = cfg.fused_feature_width > 0 ? ftr.names : std::vector<std::string>{};
  const auto report = model::train(m, train_set, ftr.rows, names, test_set, fte.rows,
                                   [&out](int epoch, const model::EpochMetrics& e) {
                                     out << "epoch " << epoch + 1 << " loss " << e.train_loss << " train_acc "
                                         << e.train_accuracy << " test_acc " << e.test_accuracy << "\n";
                                   });
  std::string text = "epoch,train_loss,train_accuracy,test_accuracy\n";
  for (std::size_t i = 0; i < report.epochs.size(); ++i) {
    const auto& e = report.epochs[i];
    text += std::to_string(i + 1) + "," + io::format_real(e.train_loss) + "," + io::format_real(e.train_accuracy) +
            "," + io::format_real(e.test_accuracy) + "\n";
  }
  model::save_checkpoint(m, a.out);
  io::atomic_write(a.report, text);
  out << "trained " << report.epochs.size() << " epochs in " << report.wall_seconds << " s; checkpoint " << a.out
      << "\n";
  return kExitOk;
}

struct PredictArgs {
  std::string ckpt, in, features, out;
};

inline int run_predict(const PredictArgs& a, std::ostream& out) {
  auto m = model::load_checkpoint<float>(a.ckpt);
  const auto set = read_satbin(a.in);
  std::vector<std::vector<double>> scaled;
  if (m.net.config().fused_feature_width > 0) {
    require(!a.features.empty(), ErrorKind::Argument, "this model fuses handcrafted features; pass --features");
    const auto ft = read_features(a.features);
    check_alignment(ft, set, "features");
    scaled = model::scale_rows(m.scaler, ft.project(m.feature_names));
  }
  const auto probs = model::predict_proba(m, set, scaled);
  write_predictions(a.out, probs);
  out << "predicted " << set.size() << " patches to " << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string pred, labels, out;
};

inline int run_eval(const EvalArgs& a, std::ostream& out) {
  const auto set = read_satbin(a.labels);
  const auto pred = read_predictions(a.pred);
  const auto labels = model::labels_of(set);
  const auto cm = eval::confusion(pred, labels, set.num_classes());
  std::string text = "metric,value\n";
  text += "patches," + std::to_string(cm.total()) + "\n";
  text += "accuracy," + io::format_real(cm.accuracy()) + "\n";
  for (int t = 0; t < cm.num_classes; ++t)
    for (int p = 0; p < cm.num_classes; ++p)
      text += "confusion_" + std::to_string(t) + "_" + std::to_string(p) + "," + std::to_string(cm(t, p)) + "\n";
  io::atomic_write(a.out, text);
  out << "accuracy " << cm.accuracy() << " over " << cm.total() << " patches\n";
  return kExitOk;
}

struct McNemarArgs {
  std::string pred_a, pred_b, labels, out;
  bool no_correction = false;
};

inline int run_mcnemar(const McNemarArgs& a, std::ostream& out) {
  const auto set = read_satbin(a.labels);
  const auto r = eval::mcnemar(read_predictions(a.pred_a), read_predictions(a.pred_b), model::labels_of(set),
                               !a.no_correction);
  const std::string text = "b,c,chi2,p_two_tailed\n" + std::to_string(r.b) + "," + std::to_string(r.c) + "," +
                           io::format_real(r.chi2) + "," + io::format_real(r.p_two_tailed) + "\n";
  if (!a.out.empty()) io::atomic_write(a.out, text);
  out << "b = " << r.b << ", c = " << r.c << ", chi2 = " << r.chi2 << " (df = 1), p = " << r.p_text() << "\n";
  return kExitOk;
}

struct StatsArgs {
  std::string in, features, dataset, out;
};

inline int run_stats(const StatsArgs& a, std::ostream& out) {
  const auto set = read_satbin(a.in);
  const std::string name = a.dataset.empty() ? std::filesystem::path(a.in).stem().string() : a.dataset;
  std::string text = "dataset,type,delta_mean,delta_sigma\n";
  const auto raw = ranking::raw_separability(set);
  text += name + ",raw," + io::format_real(raw.delta_mean) + "," + io::format_real(raw.delta_sigma) + "\n";
  if (!a.features.empty()) {
    const auto ft = read_features(a.features);
    check_alignment(ft, set, "features");
    const auto s = ranking::feature_separability(ft.columns(), ft.labels, set.num_classes());
    text += name + ",features," + io::format_real(s.delta_mean) + "," + io::format_real(s.delta_sigma) + "\n";
  }
  if (!a.out.empty()) io::atomic_write(a.out, text);
  out << text;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

/// Exit 0 on success, 2 on usage errors, 1 on domain errors (`error[<kind>]: ...` on `err`).
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"satfuse: handcrafted-feature fusion CNN for satellite patch classification"};
  app.require_subcommand(1);

  ConvertArgs convert;
  auto* c = app.add_subcommand("convert", "Convert a raw dump (RAWSAT) or pixel/label CSVs to SATBIN");
  c->add_option("--in", convert.in, "RAWSAT file, or pixel CSV when --labels is given")->required();
  c->add_option("--out", convert.out, "Output SATBIN")->required();
  c->add_option("--labels", convert.labels, "One-hot label CSV (selects CSV input)");
  c->add_option("--height", convert.height, "Patch height for CSV input")->check(CLI::PositiveNumber);
  c->add_option("--width", convert.width, "Patch width for CSV input")->check(CLI::PositiveNumber);
  c->add_option("--channels", convert.channels, "Channels for CSV input")->check(CLI::PositiveNumber);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic labeled set");
  s->add_option("--out", synth.out, "Output SATBIN")->required();
  s->add_option("--classes", synth.classes, "Number of classes (4 or 6)")->check(CLI::IsMember({4, 6}));
  s->add_option("--per-class", synth.per_class, "Patches per class")->required()->check(CLI::PositiveNumber);
  s->add_option("--seed", synth.seed, "Random seed");

  ExtractArgs extract;
  auto* e = app.add_subcommand("extract", "Compute handcrafted features for every patch");
  e->add_option("--in", extract.in, "Input SATBIN")->required();
  e->add_option("--out", extract.out, "Output feature CSV")->required();
  auto* all = e->add_flag("--all", extract.all, "Full 150-feature catalog (default)");
  auto* sel = e->add_flag("--selected", extract.selected, "The 22 ranked features");
  auto* rk = e->add_option("--ranking", extract.ranking, "Use the features selected in a ranking CSV");
  all->excludes(sel)->excludes(rk);
  sel->excludes(rk);
  e->add_option("--threads", extract.threads, "Worker threads")->check(CLI::PositiveNumber);

  RankArgs rank;
  auto* r = app.add_subcommand("rank", "Rank features by distribution separability");
  r->add_option("--features", rank.features, "Feature CSV")->required();
  r->add_option("--threshold", rank.threshold, "Selection threshold on d_s")->check(CLI::NonNegativeNumber);
  r->add_option("--out", rank.out, "Output ranking CSV")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train the fused network");
  t->add_option("--train", train.train, "Training SATBIN")->required();
  t->add_option("--test", train.test, "Test SATBIN")->required();
  auto* ftr = t->add_option("--features-train", train.features_train, "Training feature CSV");
  auto* fte = t->add_option("--features-test", train.features_test, "Test feature CSV");
  ftr->needs(fte);
  fte->needs(ftr);
  t->add_option("--config", train.config, "key = value configuration file");
  t->add_option("--out", train.out, "Output checkpoint")->required();
  t->add_option("--report", train.report, "Per-epoch report CSV")->required();

  PredictArgs predict;
  auto* p = app.add_subcommand("predict", "Predict class probabilities with a checkpoint");
  p->add_option("--ckpt", predict.ckpt, "Checkpoint")->required();
  p->add_option("--in", predict.in, "Input SATBIN")->required();
  p->add_option("--features", predict.features, "Feature CSV for the same patches");
  p->add_option("--out", predict.out, "Output prediction CSV")->required();

  EvalArgs evaluate;
  auto* v = app.add_subcommand("eval", "Accuracy and confusion matrix");
  v->add_option("--pred", evaluate.pred, "Prediction CSV")->required();
  v->add_option("--labels", evaluate.labels, "SATBIN holding the true labels")->required();
  v->add_option("--out", evaluate.out, "Output report CSV")->required();

  McNemarArgs mc;
  auto* m = app.add_subcommand("mcnemar", "McNemar test between two prediction sets");
  m->add_option("--pred-a", mc.pred_a, "Prediction CSV of classifier A")->required();
  m->add_option("--pred-b", mc.pred_b, "Prediction CSV of classifier B")->required();
  m->add_option("--labels", mc.labels, "SATBIN holding the true labels")->required();
  m->add_option("--out", mc.out, "Optional CSV output");
  m->add_flag("--no-correction", mc.no_correction, "Disable the continuity correction");

  StatsArgs stats;
  auto* st = app.add_subcommand("stats", "Class separability of raw pixels and features");
  st->add_option("--in", stats.in, "Input SATBIN")->required();
  st->add_option("--features", stats.features, "Feature CSV for the same patches");
  st->add_option("--dataset", stats.dataset, "Dataset name for the report (default: file stem)");
  st->add_option("--out", stats.out, "Optional CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c->parsed()) return run_convert(convert, out);
    if (s->parsed()) return run_synth(synth, out);
    if (e->parsed()) return run_extract(extract, out);
    if (r->parsed()) return run_rank(rank, out);
    if (t->parsed()) return run_train(train, out);
    if (p->parsed()) return run_predict(predict, out);
    if (v->parsed()) return run_eval(evaluate, out);
    if (m->parsed()) return run_mcnemar(mc, out);
    if (st->parsed()) return run_stats(stats, out);
  } catch (const Error& ex) {
    err << "error[" << to_string(ex.kind()) << "]: " << ex.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& ex) {
    err << "error[io]: " << ex.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}

}  // namespace satfuse::cli
