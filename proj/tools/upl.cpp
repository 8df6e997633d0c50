#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "config_json.hpp"
#include "upl/upl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace upl;
using upl::tools::RunConfig;

namespace {

/// Flags shared by train, sweep and compare. Anything given explicitly overrides --config.
struct RunFlags {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::string> loss;
  std::optional<double> margin, gamma, learning_rate, noise_sigma, common_offset;
  std::optional<std::size_t> epochs, batch_size, n_pairs, dim, eval_every;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> optimizer;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config or run manifest");
    cmd->add_option("--out", out_dir, "output directory")->capture_default_str();
    cmd->add_option("--loss", loss, "triplet-hn | vlc | unified");
    cmd->add_option("--margin", margin, "margin m");
    cmd->add_option("--gamma", gamma, "scale gamma");
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--batch-size", batch_size);
    cmd->add_option("--lr", learning_rate, "learning rate");
    cmd->add_option("--optimizer", optimizer, "plain_gd | momentum | adam");
    cmd->add_option("--eval-every", eval_every);
    cmd->add_option("--seed", seed, "seed for both data and training");
    cmd->add_option("--n-pairs", n_pairs);
    cmd->add_option("--dim", dim);
    cmd->add_option("--noise-sigma", noise_sigma);
    cmd->add_option("--common-offset", common_offset);
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : tools::load_run_config(config_path);
    if (loss) c.train.loss.kind = parse_loss_kind(*loss);
    if (margin) c.train.loss.margin = *margin;
    if (gamma) c.train.loss.gamma = *gamma;
    if (epochs) c.train.epochs = *epochs;
    if (batch_size) c.train.batch_size = *batch_size;
    if (learning_rate) c.train.learning_rate = *learning_rate;
    if (optimizer) c.train.optimizer.kind = tools::parse_optimizer(*optimizer);
    if (eval_every) c.train.eval_every = *eval_every;
    if (seed) c.data.seed = c.train.seed = *seed;
    if (n_pairs) c.data.n_pairs = *n_pairs;
    if (dim) c.data.dim = *dim;
    if (noise_sigma) c.data.noise_sigma = *noise_sigma;
    if (common_offset) c.data.common_offset = *common_offset;
    c.data.validate();
    c.train.validate((c.data.n_pairs * 4) / 5);
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    std::uint64_t seed, const std::vector<fs::path>& outputs) {
  json outs = json::array();
  for (const auto& p : outputs) outs.push_back(p.filename().string());
  const json manifest{{"command", command},
                      {"config", config},
                      {"seed", seed},
                      {"version", std::string(kVersion)},
                      {"outputs", outs}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir + ": " + ec.message());
  return p;
}

int cmd_train(const RunFlags& f) {
  const RunConfig c = f.resolve();
  const SynthData data = generate_synthetic_pairs(c.data);
  const ExperimentRecord rec = train(data, c.train);
  const fs::path dir = prepare_dir(f.out_dir);
  write_text(dir / "curves.csv", curves_csv(rec));
  write_manifest(dir, "train", tools::to_json(c), c.train.seed, {dir / "curves.csv"});
  const Snapshot& last = rec.back();
  std::printf("%s: epoch %zu loss %.6g rsum %.1f gap %.4f -> %s\n",
              std::string(to_string(c.train.loss.kind)).c_str(), last.epoch, last.loss,
              last.metrics.rsum, last.gap.gap, (dir / "curves.csv").string().c_str());
  return 0;
}

int cmd_sweep(const RunFlags& f, const std::string& axis, const std::vector<double>& values) {
  const RunConfig c = f.resolve();
  const SweepAxis ax = axis == "m" ? SweepAxis::Margin : SweepAxis::Gamma;
  const SynthData data = generate_synthetic_pairs(c.data);
  const auto rows = run_sweep(data, ax, values, c.train);
  std::ostringstream csv;
  csv << (ax == SweepAxis::Margin ? "margin," : "gamma,") << kCurvesHeader << '\n';
  for (const SweepRow& r : rows) {
    csv << format_double(r.value) << ',';
    write_snapshot_row(csv, r.final);
    std::printf("%s=%-8g rsum %.1f gap %.4f\n", axis.c_str(), r.value, r.final.metrics.rsum,
                r.final.gap.gap);
  }
  const fs::path dir = prepare_dir(f.out_dir);
  write_text(dir / "sweep.csv", csv.str());
  json cfg = tools::to_json(c);
  cfg["sweep"] = {{"axis", axis}, {"values", values}};
  write_manifest(dir, "sweep", cfg, c.train.seed, {dir / "sweep.csv"});
  return 0;
}

int cmd_compare(const RunFlags& f, const std::vector<std::string>& names) {
  const RunConfig c = f.resolve();
  std::vector<LossSpec> losses;
  for (const auto& n : names) {
    LossSpec l = c.train.loss;
    l.kind = parse_loss_kind(n);
    losses.push_back(l);
  }
  const SynthData data = generate_synthetic_pairs(c.data);
  const auto rows = run_convergence_comparison(data, losses, c.train);
  std::ostringstream csv;
  csv << "loss,epochs_to_95," << kCurvesHeader << '\n';
  for (const ComparisonRow& r : rows) {
    csv << to_string(r.loss.kind) << ',' << r.epochs_to_95 << ',';
    write_snapshot_row(csv, r.record.back());
    std::printf("%-10s epochs_to_95 %2zu final rsum %.1f gap %.4f\n",
                std::string(to_string(r.loss.kind)).c_str(), r.epochs_to_95,
                r.record.back().metrics.rsum, r.record.back().gap.gap);
  }
  const fs::path dir = prepare_dir(f.out_dir);
  write_text(dir / "compare.csv", csv.str());
  json cfg = tools::to_json(c);
  cfg["compare"] = {{"losses", names}};
  write_manifest(dir, "compare", cfg, c.train.seed, {dir / "compare.csv"});
  return 0;
}

struct GradcheckFlags {
  std::vector<std::string> losses{"triplet-hn", "vlc", "unified"};
  std::size_t batch_size = 8, dim = 16, seeds = 50;
  double gamma = 60.0, margin = 0.2, h = 1e-6;
  std::uint64_t seed = 1;
};

int cmd_gradcheck(const GradcheckFlags& f) {
  bool ok = true;
  std::printf("%-10s %8s %8s %14s %10s  %s\n", "loss", "trials", "skipped", "max_rel_err",
              "worst_seed", "result");
  for (const auto& name : f.losses) {
    GradcheckConfig cfg;
    cfg.loss = LossSpec{parse_loss_kind(name), f.margin, f.gamma};
    cfg.batch_size = f.batch_size;
    cfg.dim = f.dim;
    cfg.trials = f.seeds;
    cfg.h = f.h;
    cfg.seed = f.seed;
    const GradcheckReport rep = run_gradcheck(cfg);
    std::printf("%-10s %8zu %8zu %14.3e %10llu  %s\n", name.c_str(), rep.trials.size(),
                rep.skipped, rep.worst, static_cast<unsigned long long>(rep.worst_seed),
                rep.passed() ? "PASS" : "FAIL");
    if (!rep.passed()) {
      ok = false;
      const json record{{"status", "FAIL"},
                        {"check", "gradcheck"},
                        {"loss", name},
                        {"seed", rep.worst_seed},
                        {"max_rel_error", rep.worst},
                        {"tolerance", kGradTolerance},
                        {"batch_size", f.batch_size},
                        {"dim", f.dim},
                        {"gamma", f.gamma},
                        {"margin", f.margin},
                        {"h", f.h}};
      std::cerr << record.dump() << '\n';
    }
  }
  return ok ? 0 : 1;
}

int cmd_limits(const LimitsConfig& cfg) {
  const LimitsReport rep = run_limits(cfg);
  std::printf("%10s %14s %14s %14s %14s\n", "gamma", "identity_err", "max_gap", "bound",
              "gamma*gap");
  for (const LimitRow& r : rep.rows)
    std::printf("%10g %14.3e %14.6e %14.6e %14.6e%s\n", r.gamma, r.identity_error, r.max_gap,
                r.bound, r.max_scaled_gap, r.bound_ok ? "" : "  BOUND VIOLATED");
  std::printf("gap shrinks at least like 1/gamma: %s\n",
              rep.shrinks_like_inverse_gamma ? "yes" : "no");
  const bool ok = rep.passed();
  std::printf("%s\n", ok ? "PASS" : "FAIL");
  if (!ok) {
    json rows = json::array();
    for (const LimitRow& r : rep.rows)
      rows.push_back({{"gamma", r.gamma},
                      {"identity_error", r.identity_error},
                      {"max_gap", r.max_gap},
                      {"bound", r.bound},
                      {"bound_ok", r.bound_ok}});
    std::cerr << json{{"status", "FAIL"}, {"check", "limits"}, {"rows", rows},
                      {"shrinks_like_inverse_gamma", rep.shrinks_like_inverse_gamma}}
                     .dump()
              << '\n';
  }
  return ok ? 0 : 1;
}

int cmd_eval(const std::string& pv, const std::string& pt, const std::string& loss,
             double margin, double gamma) {
  const auto [v, t] = load_embeddings(pv, pt);
  const SimilarityMatrix s = cosine_similarity_matrix(v, t);
  const RetrievalMetrics m = evaluate_retrieval(s);
  std::printf("pairs %zu dim %zu\n", v.size(), v.dim());
  std::printf("i2t R@1 %.2f R@5 %.2f R@10 %.2f\n", m.i2t[0], m.i2t[1], m.i2t[2]);
  std::printf("t2i R@1 %.2f R@5 %.2f R@10 %.2f\n", m.t2i[0], m.t2i[1], m.t2i[2]);
  std::printf("rsum %.2f\n", m.rsum);
  if (v.size() >= 2) {
    const GapStats g = gap_stats(s);
    std::printf("mean_pos_sim %.6f mean_hardneg_sim %.6f gap %.6f\n", g.mean_positive,
                g.mean_hardest_negative, g.gap);
  }
  const LossSpec spec{parse_loss_kind(loss), margin, gamma};
  std::printf("%s loss %.10g\n", loss.c_str(), evaluate_loss(spec, s).total);
  return 0;
}

int cmd_generate(const SynthConfig& cfg, const std::string& out_dir) {
  const SynthData data = generate_synthetic_pairs(cfg);
  const fs::path dir = prepare_dir(out_dir);
  write_embeddings((dir / "visual.csv").string(), data.v.matrix());
  write_embeddings((dir / "text.csv").string(), data.t.matrix());
  const json config{{"n_pairs", cfg.n_pairs},
                    {"dim", cfg.dim},
                    {"noise_sigma", cfg.noise_sigma},
                    {"seed", cfg.seed},
                    {"common_offset", cfg.common_offset}};
  write_manifest(dir, "generate", config, cfg.seed, {dir / "visual.csv", dir / "text.csv"});
  std::printf("wrote %zu pairs to %s\n", cfg.n_pairs, dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pair-similarity loss laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  GradcheckFlags gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  gradcheck->set_help_flag("--help", "print this help message and exit");
  gradcheck->add_option("--loss", gc.losses, "losses to check")->capture_default_str();
  gradcheck->add_option("--batch-size", gc.batch_size)->capture_default_str()
      ->check(CLI::PositiveNumber);
  gradcheck->add_option("--dim", gc.dim)->capture_default_str()->check(CLI::Range(2, 1 << 20));
  gradcheck->add_option("--gamma", gc.gamma)->capture_default_str()->check(CLI::PositiveNumber);
  gradcheck->add_option("--margin", gc.margin)->capture_default_str()->check(CLI::NonNegativeNumber);
  gradcheck->add_option("--seeds", gc.seeds, "number of trials")->capture_default_str()
      ->check(CLI::PositiveNumber);
  gradcheck->add_option("--seed", gc.seed, "first seed")->capture_default_str();
  gradcheck->add_option("--h", gc.h, "finite-difference step")->capture_default_str()
      ->check(CLI::Range(1e-8, 1e-4));

  LimitsConfig lc;
  auto* limits = app.add_subcommand("limits", "m = 0 identity and large-gamma bound");
  limits->add_option("--batch-size", lc.batch_size)->capture_default_str()
      ->check(CLI::PositiveNumber);
  limits->add_option("--dim", lc.dim)->capture_default_str()->check(CLI::Range(2, 1 << 20));
  limits->add_option("--margin", lc.margin)->capture_default_str()->check(CLI::NonNegativeNumber);
  limits->add_option("--gamma-list", lc.gammas, "strictly ascending")->capture_default_str();
  limits->add_option("--seeds", lc.batches, "number of random batches")->capture_default_str()
      ->check(CLI::PositiveNumber);
  limits->add_option("--seed", lc.seed, "first seed")->capture_default_str();

  RunFlags train_flags, sweep_flags, compare_flags;
  auto* train_cmd = app.add_subcommand("train", "train on synthetic pairs, write curves.csv");
  train_flags.attach(train_cmd);

  std::string axis;
  std::vector<double> values;
  auto* sweep = app.add_subcommand("sweep", "final metrics across m or gamma");
  sweep_flags.attach(sweep);
  sweep->add_option("--axis", axis)->required()->check(CLI::IsMember({"m", "gamma"}));
  sweep->add_option("--values", values)->required();

  std::vector<std::string> compare_losses{"triplet-hn", "vlc", "unified"};
  auto* compare = app.add_subcommand("compare", "convergence comparison across losses");
  compare_flags.attach(compare);
  compare->add_option("--losses", compare_losses)->capture_default_str();

  std::string eval_v, eval_t, eval_loss = "unified";
  double eval_margin = 0.2, eval_gamma = 60.0;
  auto* eval = app.add_subcommand("eval", "metrics and loss for embedding CSV files");
  eval->add_option("--visual", eval_v)->required();
  eval->add_option("--text", eval_t)->required();
  eval->add_option("--loss", eval_loss)->capture_default_str();
  eval->add_option("--margin", eval_margin)->capture_default_str();
  eval->add_option("--gamma", eval_gamma)->capture_default_str();

  SynthConfig gen_cfg = reference_synth_config();
  std::string gen_out = ".";
  auto* generate = app.add_subcommand("generate", "write synthetic pairs as embedding CSV");
  generate->add_option("--n-pairs", gen_cfg.n_pairs)->capture_default_str();
  generate->add_option("--dim", gen_cfg.dim)->capture_default_str();
  generate->add_option("--noise-sigma", gen_cfg.noise_sigma)->capture_default_str();
  generate->add_option("--common-offset", gen_cfg.common_offset)->capture_default_str();
  generate->add_option("--seed", gen_cfg.seed)->capture_default_str();
  generate->add_option("--out", gen_out)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gradcheck) return cmd_gradcheck(gc);
    if (*limits) return cmd_limits(lc);
    if (*train_cmd) return cmd_train(train_flags);
    if (*sweep) return cmd_sweep(sweep_flags, axis, values);
    if (*compare) return cmd_compare(compare_flags, compare_losses);
    if (*eval) return cmd_eval(eval_v, eval_t, eval_loss, eval_margin, eval_gamma);
    if (*generate) return cmd_generate(gen_cfg, gen_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
