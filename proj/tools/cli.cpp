// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "nexttensor/checkpoint.hpp"
#include "nexttensor/config.hpp"
#include "nexttensor/decode.hpp"
#include "nexttensor/error.hpp"
#include "nexttensor/eval.hpp"
#include "nexttensor/train.hpp"

namespace nxt::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_file;
  std::string checkpoint;
  std::string data_dir;
};

/// `--key value` / `--key=value` pairs left over after CLI11 parsing.
void apply_overrides(Config& config, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const auto& a = extras[i];
    if (!a.starts_with("--")) throw ParameterError("unexpected argument '" + a + "'");
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      set_value(config, a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw ParameterError("flag '" + a + "' needs a value");
      set_value(config, a.substr(2), extras[++i]);
    }
  }
}

Config build_config(const Common& c, const std::vector<std::string>& extras, Config base = {}) {
  Config cfg = c.config_file.empty() ? std::move(base) : load_config(c.config_file, std::move(base));
  apply_overrides(cfg, extras);
  cfg.validate();
  return cfg;
}

fs::path run_dir(const Config& c) { return fs::path(c.output_dir) / c.run_name; }

std::string checkpoint_path(const Common& c, const Config& cfg) {
  return c.checkpoint.empty() ? (run_dir(cfg) / "checkpoint.tar1").string() : c.checkpoint;
}

/// The checkpoint's config with file and flag overrides applied on top.
Checkpoint open_checkpoint(const Common& c, const std::vector<std::string>& extras) {
  // The checkpoint path may itself depend on overrides (run.name, run.output_dir).
  const Config probe = build_config(c, extras);
  auto ck = load_checkpoint(checkpoint_path(c, probe));
  const auto frozen = to_pairs(ck.config);
  ck.config = build_config(c, extras, ck.config);
  for (const auto& [key, value] : frozen)
    if ((key.starts_with("model.") || key.starts_with("data.") || key == "run.seed") &&
        value != get_value(ck.config, key))
      throw ParameterError("cannot change " + key + " of a trained checkpoint (checkpoint has " + value + ")");
  return ck;
}

std::vector<Sample> read_split(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot read dataset '" + path.string() + "'");
  return read_dataset(in);
}

void check_split(const std::vector<Sample>& data, const Config& cfg, const std::string& what) {
  NXT_REQUIRE(!data.empty(), what + " split is empty");
  for (const auto& s : data) {
    NXT_REQUIRE(static_cast<int>(s.tokens.size()) == cfg.data.height * cfg.data.width,
                what + " record length differs from data.height x data.width");
    NXT_REQUIRE(s.class_label >= 0 && s.class_label < cfg.data.num_classes, what + " record class out of range");
    for (TokenId t : s.tokens) NXT_REQUIRE(t >= 0 && t < cfg.data.vocab_size, what + " record token out of range");
  }
}

struct Splits {
  std::vector<Sample> train, heldout;
};

Splits load_splits(const Common& c, const Config& cfg) {
  Splits s;
  if (!c.data_dir.empty()) {
    s.train = read_split(fs::path(c.data_dir) / "train.txt");
    s.heldout = read_split(fs::path(c.data_dir) / "heldout.txt");
  } else {
    const auto spec = cfg.spec();
    s.train = make_dataset(spec, cfg.data.train_records, cfg.data.train_seed);
    s.heldout = make_dataset(spec, cfg.data.heldout_records, cfg.data.heldout_seed);
  }
  check_split(s.train, cfg, "train");
  check_split(s.heldout, cfg, "heldout");
  return s;
}

std::string dataset_text(std::span<const Sample> data) {
  std::ostringstream os;
  write_dataset(os, data);
  return os.str();
}

std::span<const Sample> head(const std::vector<Sample>& v, std::size_t n) {
  return {v.data(), n == 0 ? v.size() : std::min(n, v.size())};
}

// ------------------------------------------------------------------ commands

int cmd_gen_data(const Common& c, const std::vector<std::string>& extras, const std::string& out_dir,
                 std::ostream& out) {
  const Config cfg = build_config(c, extras);
  const fs::path dir = out_dir.empty() ? run_dir(cfg) / "data" : fs::path(out_dir);
  const auto spec = cfg.spec();
  const auto train = make_dataset(spec, cfg.data.train_records, cfg.data.train_seed);
  const auto held = make_dataset(spec, cfg.data.heldout_records, cfg.data.heldout_seed);
  write_file_atomic((dir / "train.txt").string(), dataset_text(train));
  write_file_atomic((dir / "heldout.txt").string(), dataset_text(held));
  write_file_atomic((dir / "config.txt").string(), to_text(cfg));
  out << "train\t" << train.size() << "\t" << (dir / "train.txt").string() << "\n";
  out << "heldout\t" << held.size() << "\t" << (dir / "heldout.txt").string() << "\n";
  return kExitOk;
}

int cmd_train(const Common& c, const std::vector<std::string>& extras, const std::string& resume,
              std::ostream& out) {
  Config cfg;
  ModelParams<float> params;
  OptimizerState opt;
  if (!resume.empty()) {
    Common from = c;
    from.checkpoint = resume;
    auto ck = open_checkpoint(from, extras);
    if (!ck.optimizer) throw FileError("checkpoint '" + resume + "' carries no optimizer state to resume from");
    cfg = std::move(ck.config);
    params = std::move(ck.params);
    opt = std::move(*ck.optimizer);
  } else {
    cfg = build_config(c, extras);
    params = init_params(cfg.model_config());
    opt = make_optimizer_state(cfg.model_config());
  }
  const auto data = load_splits(c, cfg);
  const fs::path dir = run_dir(cfg);
  fs::create_directories(dir);
  write_file_atomic((dir / "config.txt").string(), to_text(cfg));
  const std::string ckpt = (dir / "checkpoint.tar1").string();

  std::ofstream metrics(dir / "metrics.tsv", resume.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw FileError("cannot write '" + (dir / "metrics.tsv").string() + "'");
  if (resume.empty()) metrics << "step\tloss\tslot_loss\theldout_nll\tms\n";

  const auto heldout = head(data.heldout, static_cast<std::size_t>(cfg.train.eval_records));
  const EvalOptions eval_opts{EvalMode::rollout, {}, stream_seed(cfg, SeedStream::eval)};
  TrainHooks hooks;
  hooks.eval_every = cfg.train.eval_every;
  hooks.heldout = [&](const ModelParams<float>& p) { return heldout_nll(p, heldout, eval_opts).per_token; };
  hooks.on_step = [&](const StepMetrics& m) {
    metrics << format_metrics(m) << '\n';
    if (m.heldout_nll) out << "step " << m.step << "  loss " << m.loss << "  heldout_nll " << *m.heldout_nll << "\n";
  };
  hooks.checkpoint_every = cfg.train.checkpoint_every;
  hooks.checkpoint = [&](const ModelParams<float>& p, const OptimizerState& o) {
    metrics.flush();
    save_checkpoint(ckpt, cfg, p, &o);
  };
  out << "training " << cfg.run_name << ": k=" << cfg.model.k << " schedule=" << to_string(cfg.noise.kind)
      << " parameters=" << parameter_count(params) << " steps " << opt.step << ".." << cfg.train.steps << "\n";
  train(params, opt, data.train, cfg.train_config(), hooks);
  out << "checkpoint\t" << ckpt << "\n";
  return kExitOk;
}

int cmd_sample(const Common& c, const std::vector<std::string>& extras, bool traces, std::ostream& out) {
  const auto ck = open_checkpoint(c, extras);
  const auto& cfg = ck.config;
  const fs::path dir = run_dir(cfg) / (traces ? "traces" : "samples");
  StepModel sm(ck.params);
  Decoder dec(sm);
  auto dc = cfg.decode_config();
  const std::uint64_t base_seed = dc.seed;
  std::vector<Sample> all;
  for (int i = 0; i < cfg.decode.samples; ++i) {
    const int cls = i % cfg.data.num_classes;
    dc.seed = derive_seed(base_seed, static_cast<std::uint64_t>(i));
    const auto r = dec.generate(cls, dc);
    all.push_back({cls, r.tokens});
    const std::string stem = (traces ? "trace-" : "sample-") + std::to_string(i);
    std::ostringstream grid;
    write_grid(grid, r.tokens, cfg.data.height, cfg.data.width);
    write_file_atomic((dir / (stem + ".grid")).string(), grid.str());
    if (traces) {
      std::ostringstream tr;
      write_trace(tr, r.trace);
      write_file_atomic((dir / (stem + ".tsv")).string(), tr.str());
    } else {
      std::ostringstream pgm;
      write_pgm(pgm, r.tokens, cfg.data.height, cfg.data.width, cfg.data.vocab_size);
      write_file_atomic((dir / (stem + ".pgm")).string(), pgm.str());
    }
  }
  write_file_atomic((dir / (traces ? "traced.txt" : "samples.txt")).string(), dataset_text(all));
  out << (traces ? "traces\t" : "samples\t") << all.size() << "\t" << dir.string() << "\n";
  return kExitOk;
}

int cmd_compare(const std::vector<std::string>& files, const std::string& out_path, std::ostream& out) {
  std::vector<EvalReport> reports;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw FileError("cannot read report '" + f + "'");
    reports.push_back(read_report(in));
  }
  const auto rows = compare_runs(reports);
  std::ostringstream table;
  write_comparison(table, rows);
  out << table.str();
  if (!out_path.empty()) write_file_atomic(out_path, table.str());
  return kExitOk;
}

int cmd_eval(const Common& c, const std::vector<std::string>& extras, std::ostream& out) {
  const auto ck = open_checkpoint(c, extras);
  const auto& cfg = ck.config;
  const auto data = load_splits(c, cfg);
  const auto heldout = head(data.heldout, cfg.eval.records);
  const std::uint64_t seed = stream_seed(cfg, SeedStream::eval);

  EvalReport r;
  r.run_name = cfg.run_name;
  r.seed = cfg.seed;
  r.spec_fingerprint = spec_fingerprint(cfg.spec());
  r.k = cfg.model.k;
  r.config = to_pairs(cfg);
  r.heldout_records = static_cast<std::int64_t>(heldout.size());
  const auto rolled = heldout_nll(ck.params, heldout, {EvalMode::rollout, {}, seed});
  r.heldout_nll_per_token = rolled.per_token;
  r.slot_nll = rolled.slot_nll;
  const auto clean = heldout_nll(ck.params, heldout, {EvalMode::clean, {}, seed});
  r.clean_nll_per_token = clean.per_token;
  r.copy_rate = clean.copy_rate();
  r.noised_nll_per_token = heldout_nll(ck.params, heldout, {EvalMode::noised, cfg.schedule(), seed}).per_token;
  const auto div = divergence_all_classes(ck.params, cfg.spec(), cfg.eval.samples_per_class, derive_seed(seed, 1),
                                          cfg.decode_config());
  r.samples_per_class = static_cast<std::int64_t>(cfg.eval.samples_per_class);
  r.sample_bigram_l1 = div.bigram_l1;
  r.sample_exact_nll_gap = div.exact_nll_gap;
  r.sample_exact_nll_gap_stderr = div.exact_nll_gap_stderr;
  if (cfg.eval.bench_batch > 0) {
    const ModelParams<float>* models[] = {&ck.params};
    r.throughput = throughput_bench(models, cfg.eval.bench_batch, cfg.eval.bench_repetitions,
                                    stream_seed(cfg, SeedStream::bench));
  }
  r.validate();

  const std::string stem = report_stem(to_text(cfg), cfg.seed);
  const fs::path dir = run_dir(cfg);
  std::ostringstream text, tsv;
  write_report(text, r);
  write_report_tsv(tsv, std::span<const EvalReport>(&r, 1));
  write_file_atomic((dir / (stem + ".txt")).string(), text.str());
  write_file_atomic((dir / (stem + ".tsv")).string(), tsv.str());
  out << "heldout_nll_per_token\t" << r.heldout_nll_per_token << "\n";
  out << "bigram_l1\t" << r.sample_bigram_l1 << "\n";
  out << "exact_nll_gap\t" << r.sample_exact_nll_gap << " +- " << r.sample_exact_nll_gap_stderr << "\n";
  out << "report\t" << (dir / (stem + ".txt")).string() << "\n";
  return kExitOk;
}

int cmd_bench(const Common& c, const std::vector<std::string>& extras, std::ostream& out) {
  const Config cfg = build_config(c, extras);
  std::vector<ModelParams<float>> params;
  for (int k : cfg.bench.ks) {
    Config ck = cfg;
    ck.model.k = k;
    ck.validate();
    params.push_back(init_params(ck.model_config()));
  }
  std::vector<const ModelParams<float>*> ptrs;
  for (const auto& p : params) ptrs.push_back(&p);
  const auto rows = throughput_bench(ptrs, cfg.bench.batch, cfg.bench.repetitions, stream_seed(cfg, SeedStream::bench));
  std::ostringstream table;
  write_bench_table(table, rows);
  write_file_atomic((run_dir(cfg) / "bench.tsv").string(), table.str());
  out << table.str();
  return kExitOk;
}

int cmd_gradcheck(int k, std::ostream& out) {
  auto g = GradcheckConfig::tiny(k);
  const auto r = gradcheck(g);
  out << "k\t" << k << "\nchecked\t" << r.checked << "\ntensors\t" << r.tensors_covered << "\nmax_rel_error\t"
      << r.max_rel_error << "\nworst\t" << r.worst << "\n";
  if (r.max_rel_error >= 1e-3) {
    out << "FAIL\n";
    return kExitRuntime;
  }
  out << "PASS\n";
  return kExitOk;
}

int cmd_leakage(const Common& c, const std::vector<std::string>& extras, std::ostream& out) {
  const auto ck = open_checkpoint(c, extras);
  const auto& cfg = ck.config;
  const auto data = load_splits(c, cfg);
  const auto r = leakage_probe(ck.params, head(data.heldout, cfg.eval.records), cfg.schedule(),
                               stream_seed(cfg, SeedStream::eval));
  std::ostringstream os;
  os << "k = " << r.k << "\ncopy_rate = " << r.copy_rate << "\n";
  for (std::size_t j = 0; j < r.copy_rate_by_slot.size(); ++j)
    os << "copy_rate." << j << " = " << r.copy_rate_by_slot[j] << "\n";
  os << "new_slot_nll = " << r.new_slot_nll << "\nnew_slot_nll_clean = " << r.new_slot_nll_clean
     << "\nnew_slot_nll_noised = " << r.new_slot_nll_noised << "\nper_token_nll = " << r.per_token_nll << "\n";
  write_file_atomic((run_dir(cfg) / "leakage.txt").string(), os.str());
  out << os.str();
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"nexttensor: next-window prediction on synthetic token lattices", "nexttensor"};
  app.require_subcommand(1);
  Common common;
  std::string out_dir, resume, compare_out;
  std::vector<std::string> compare;
  int gradcheck_k = 2;

  auto add_common = [&common](CLI::App* sub, bool needs_checkpoint, bool reads_data) {
    sub->add_option("--config", common.config_file, "Config file (section.key = value)")->check(CLI::ExistingFile);
    if (needs_checkpoint) sub->add_option("--checkpoint", common.checkpoint, "Checkpoint (default run dir)");
    if (reads_data) sub->add_option("--data", common.data_dir, "Directory with train.txt / heldout.txt");
    sub->allow_extras();
    sub->footer("Any config key may be overridden with --section.key value.");
  };
  auto* gen = app.add_subcommand("gen-data", "Write train and held-out splits");
  add_common(gen, false, false);
  gen->add_option("--out", out_dir, "Output directory (default <run dir>/data)");
  auto* tr = app.add_subcommand("train", "Train a model");
  add_common(tr, false, true);
  tr->add_option("--resume", resume, "Resume from a checkpoint with optimizer state");
  auto* sa = app.add_subcommand("sample", "Generate samples");
  add_common(sa, true, false);
  auto* tc = app.add_subcommand("trace", "Generate samples with refinement traces");
  add_common(tc, true, false);
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint, or compare reports");
  add_common(ev, true, true);
  ev->add_option("--compare", compare, "Compare these report files instead of evaluating");
  ev->add_option("--out", compare_out, "Comparison table output path");
  auto* be = app.add_subcommand("bench", "Decode throughput for each k in bench.ks");
  add_common(be, false, false);
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check on the tiny model");
  gc->add_option("--k", gradcheck_k, "Window size")->check(CLI::Range(1, 6));
  auto* lp = app.add_subcommand("leakage-probe", "Copy rate and new-slot NLL of a checkpoint");
  add_common(lp, true, true);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, gen->remaining(), out_dir, out);
    if (tr->parsed()) return cmd_train(common, tr->remaining(), resume, out);
    if (sa->parsed()) return cmd_sample(common, sa->remaining(), false, out);
    if (tc->parsed()) return cmd_sample(common, tc->remaining(), true, out);
    if (ev->parsed()) {
      if (!compare.empty()) {
        if (!ev->remaining().empty()) throw ParameterError("--compare takes no config overrides");
        return cmd_compare(compare, compare_out, out);
      }
      return cmd_eval(common, ev->remaining(), out);
    }
    if (be->parsed()) return cmd_bench(common, be->remaining(), out);
    if (gc->parsed()) return cmd_gradcheck(gradcheck_k, out);
    if (lp->parsed()) return cmd_leakage(common, lp->remaining(), out);
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace nxt::cli
