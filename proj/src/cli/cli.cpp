#include "occlume/cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <optional>
#include <ostream>
#include <thread>

#include "occlume/autograd/optim.hpp"
#include "occlume/common/error.hpp"
#include "occlume/common/parallel.hpp"
#include "occlume/common/rng.hpp"
#include "occlume/geomesh/cloud_io.hpp"
#include "occlume/harness/harness.hpp"
#include "occlume/occlusion/generate.hpp"
#include "occlume/sampling/sampling.hpp"

namespace occlume::cli {

namespace fs = std::filesystem;
using harness::EvalOptions;
using harness::NoiseSpec;
using harness::TrainConfig;
using occlusion::GenerationConfig;
using pointmls::MultiLevelConfig;

namespace {

/// Bad flag values or config entries, reported as usage errors.
struct UsageError : Error {
  using Error::Error;
};

KvConfig default_config() {
  KvConfig kv;
  KvConfig gen = GenerationConfig{}.to_kv();
  gen.erase("seed");
  kv.merge(gen.prefixed("gen."));
  kv.merge(MultiLevelConfig{}.to_kv().prefixed("model."));
  KvConfig train = TrainConfig{}.to_kv();
  train.erase("seed");
  kv.merge(train.prefixed("train."));
  kv.set("eval.votes", std::int64_t{10});
  kv.set("eval.scale_lo", 0.8);
  kv.set("eval.scale_hi", 1.25);
  kv.set("eval.tau", 0.01);
  kv.set("eval.batch_size", std::int64_t{32});
  kv.set("noise.eta", std::vector<double>{0.5, 2.5, 5.0});
  kv.set("noise.dist", "normal");
  kv.set("noise.scale", 0.5);
  kv.set("seed", std::int64_t{0});
  return kv;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  KvConfig config;
  std::uint64_t seed = 0;
  fs::path out_dir;
};

GenerationConfig gen_config(const Context& c) {
  KvConfig kv = c.config.section("gen.");
  kv.set("seed", static_cast<std::int64_t>(c.seed));
  return GenerationConfig::from_kv(kv);
}

TrainConfig train_config(const Context& c) {
  KvConfig kv = c.config.section("train.");
  kv.set("seed", static_cast<std::int64_t>(c.seed));
  return TrainConfig::from_kv(kv);
}

EvalOptions eval_options(const Context& c) {
  const KvConfig kv = c.config.section("eval.");
  EvalOptions o;
  o.votes = static_cast<std::size_t>(kv.get_int("votes", 10));
  o.scale_lo = kv.get_double("scale_lo", o.scale_lo);
  o.scale_hi = kv.get_double("scale_hi", o.scale_hi);
  o.tau = kv.get_double("tau", o.tau);
  o.batch_size = static_cast<std::size_t>(kv.get_int("batch_size", 32));
  o.seed = derive_seed(c.seed, "eval");
  if (o.votes < 1) throw UsageError("eval.votes must be >= 1");
  if (!(o.scale_lo > 0.0 && o.scale_lo <= o.scale_hi)) throw UsageError("eval scale range is empty");
  if (!(o.tau > 0.0)) throw UsageError("eval.tau must be > 0");
  return o;
}

NoiseSpec noise_spec(const Context& c) {
  const KvConfig kv = c.config.section("noise.");
  NoiseSpec n;
  const std::string dist = kv.get_string("dist", "normal");
  if (dist == "normal") {
    n.dist = NoiseSpec::Dist::Normal;
  } else if (dist == "cube") {
    n.dist = NoiseSpec::Dist::UniformCube;
  } else {
    throw UsageError("noise.dist must be normal or cube");
  }
  n.scale = kv.get_double("scale", n.scale);
  n.seed = derive_seed(c.seed, "noise");
  n.validate();
  return n;
}

struct LoadedModel {
  MultiLevelConfig cfg;
  pointmls::ModelParams params;
};

fs::path sidecar(const fs::path& ckpt) {
  fs::path p = ckpt;
  return p.replace_extension(".cfg");
}

LoadedModel load_model(const fs::path& ckpt) {
  LoadedModel m;
  m.cfg = MultiLevelConfig::from_kv(KvConfig::load(sidecar(ckpt)));
  m.params = pointmls::init_params(m.cfg, 0);
  m.params.assign(ag::load_checkpoint(ckpt));
  return m;
}

void write_text(const fs::path& path, const std::string& text, std::ostream& out) {
  geomesh::write_file(path, text);
  out << "wrote " << path.string() << "\n";
}

KvConfig header_for(const Context& c, const std::string& command) {
  KvConfig h = c.config;
  h.set("command", command);
  return h;
}

// ------------------------------------------------------------------ commands

int cmd_gen(Context& c, const fs::path& meshes) {
  const auto cfg = gen_config(c);
  const auto report = occlusion::build_dataset(meshes, c.out_dir, cfg);
  const auto& m = report.manifest;
  c.out << "samples written: " << m.records.size() << "\n";
  c.out << "reused: " << report.reused << "\n";
  c.out << "skipped (unprojectable): " << m.skipped << "\n";
  c.out << "train: " << m.count(occlusion::Split::Train) << "\n";
  c.out << "test: " << m.count(occlusion::Split::Test) << "\n";
  c.out << "classes: " << m.classes.size() << "\n";
  c.out << "manifest: " << (c.out_dir / "manifest.tsv").string() << "\n";
  return kSuccess;
}

int cmd_sample(Context& c, const fs::path& in, const std::string& method, std::size_t m, const fs::path& ckpt,
               bool soft, const fs::path& dst_arg, bool ply) {
  const auto pc = geomesh::read_pcb(in);
  if (m == 0 || m > pc.size()) {
    throw InvalidArgument("--m must lie in [1, " + std::to_string(pc.size()) + "], got " + std::to_string(m));
  }
  geomesh::PointCloud result;
  result.label = pc.label;
  if (method == "rs") {
    result.points = sampling::gather(pc.view(), sampling::random_sample(pc, m, derive_seed(c.seed, "sample")));
  } else if (method == "fps") {
    result.points = sampling::gather(pc.view(), sampling::farthest_point_sample(pc, m));
  } else {
    if (ckpt.empty()) throw UsageError("--method cps needs --ckpt");
    const auto model = load_model(ckpt);
    if (pc.size() != model.cfg.points) {
      throw InvalidArgument("model expects " + std::to_string(model.cfg.points) + " input points, cloud has " +
                            std::to_string(pc.size()));
    }
    const auto it = std::find(model.cfg.levels.begin(), model.cfg.levels.end(), m);
    if (model.cfg.sampler != pointmls::Sampler::Cps || it == model.cfg.levels.end()) {
      throw InvalidArgument("checkpoint has no learned sampler producing " + std::to_string(m) + " points");
    }
    const auto level = static_cast<std::size_t>(it - model.cfg.levels.begin());
    std::vector<double> flat;
    for (const auto& p : pc.points) flat.insert(flat.end(), {p.x(), p.y(), p.z()});
    ag::NoGradGuard no_grad;
    const auto x = pointmls::batch_points({flat}, pc.size());
    const pointmls::ForwardOptions opt{soft ? pointmls::Mode::Eval : pointmls::Mode::Hard,
                                       eval_options(c).tau, derive_seed(c.seed, "sample")};
    const auto out = pointmls::cps_forward(x, model.params, "L" + std::to_string(level) + ".cps",
                                           model.cfg.cps(level), opt);
    const auto d = out.sampled.data();
    for (std::size_t i = 0; i < m; ++i) result.points.emplace_back(d[3 * i], d[3 * i + 1], d[3 * i + 2]);
  }
  const fs::path dst = dst_arg.empty() ? c.out_dir / "clouds" / (in.stem().string() + "_" + method + ".pcb") : dst_arg;
  geomesh::write_pcb(dst, result);
  c.out << "wrote " << dst.string() << " (" << result.size() << " points)\n";
  if (ply) {
    fs::path p = dst;
    geomesh::write_ply(p.replace_extension(".ply"), result);
    c.out << "wrote " << p.string() << "\n";
  }
  c.out << "chamfer: " << format_double(sampling::chamfer_distance(result, pc)) << "\n";
  return kSuccess;
}

int cmd_train(Context& c, const fs::path& data) {
  const auto model = MultiLevelConfig::from_kv(c.config.section("model."));
  const auto tcfg = train_config(c);
  const auto ds = harness::load_dataset(data);
  if (ds.train.empty()) throw InvalidArgument("dataset has no training samples");
  if (model.classes != ds.classes.size()) {
    throw InvalidArgument("model.classes=" + std::to_string(model.classes) + " but the dataset has " +
                          std::to_string(ds.classes.size()) + " classes");
  }
  c.out << "training on " << ds.train.size() << " samples, " << pointmls::init_params(model, 0).scalar_count()
        << " parameters\n";
  auto res = harness::train(model, tcfg, ds.train, [&](const harness::EpochLog& r) {
    c.out << "epoch " << r.epoch << " loss=" << format_double(r.loss) << " lr=" << format_double(r.lr)
          << " tau=" << format_double(r.tau) << " holdout_oa=" << format_double(r.holdout_oa) << "\n";
    c.out.flush();
  });
  const fs::path ckpt = c.out_dir / "ckpt" / "model.mls";
  ag::save_checkpoint(ckpt, res.params.all());
  geomesh::write_file(sidecar(ckpt), model.to_kv().to_string());
  c.out << "wrote " << ckpt.string() << "\n";
  write_text(c.out_dir / "metrics" / "train_log.csv", harness::log_csv(res.log, header_for(c, "train")), c.out);
  return kSuccess;
}

LoadedModel model_for_eval(const Context& c, const fs::path& ckpt) {
  if (!ckpt.empty()) return load_model(ckpt);
  LoadedModel m;
  m.cfg = MultiLevelConfig::from_kv(c.config.section("model."));
  m.params = pointmls::init_params(m.cfg, derive_seed(c.seed, "init"));
  return m;
}

const std::vector<harness::Sample>& pick_split(const harness::Dataset& ds, const std::string& split) {
  const auto& s = split == "train" ? ds.train : ds.test;
  if (s.empty()) throw InvalidArgument("split '" + split + "' is empty");
  return s;
}

int cmd_eval(Context& c, const fs::path& data, const fs::path& ckpt, const std::string& split) {
  const auto opt = eval_options(c);
  const auto model = model_for_eval(c, ckpt);
  const auto ds = harness::load_dataset(data);
  const auto ev = harness::evaluate(model.params, model.cfg, pick_split(ds, split), opt);
  c.out << "oa=" << format_double(ev.metrics.oa) << " macc=" << format_double(ev.metrics.macc) << "\n";
  write_text(c.out_dir / "metrics" / ("eval_" + split + ".csv"),
             harness::metrics_csv(ev.metrics, ds.classes, header_for(c, "eval")), c.out);
  return kSuccess;
}

int cmd_noise(Context& c, const fs::path& data, const fs::path& ckpt, const std::string& split) {
  const auto opt = eval_options(c);
  const auto spec = noise_spec(c);
  const auto etas = c.config.get_doubles("noise.eta", {});
  if (etas.empty()) throw UsageError("no noise ratios given");
  for (double e : etas)
    if (!(e >= 0.0 && e <= 100.0)) throw UsageError("noise ratios are percentages in [0, 100]");
  const auto model = model_for_eval(c, ckpt);
  const auto ds = harness::load_dataset(data);
  const auto rows = harness::robustness_sweep(model.params, model.cfg, pick_split(ds, split), etas, spec, opt);
  for (const auto& r : rows) {
    c.out << "eta=" << format_double(r.eta) << "% oa=" << format_double(r.metrics.oa)
          << " macc=" << format_double(r.metrics.macc) << "\n";
  }
  write_text(c.out_dir / "metrics" / ("noise_" + split + ".csv"), harness::sweep_csv(rows, header_for(c, "noise")),
             c.out);
  return kSuccess;
}

int cmd_export_ply(Context& c, const fs::path& in, const fs::path& dst_arg) {
  const auto pc = geomesh::read_pcb(in);
  const fs::path dst = dst_arg.empty() ? c.out_dir / (in.stem().string() + ".ply") : dst_arg;
  geomesh::write_ply(dst, pc);
  c.out << "wrote " << dst.string() << " (" << pc.size() << " points)\n";
  return kSuccess;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Occluded point cloud synthesis and multi-level sampling classifier", "occlume"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string config_path, out_dir = "out";
  std::size_t threads = 0;
  std::vector<std::string> sets;
  app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t v) { seed = v, seed_given = true; },
                                         "Global random seed");
  app.add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--threads", threads, "Worker threads (default: OCCLUME_THREADS, else all cores)");
  app.add_option("--set", sets, "Override a config entry, e.g. --set train.epochs=10");

  KvConfig flags;
  auto bind = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    return sub->add_option_function<std::string>(name, [&flags, key](const std::string& v) { flags.set(key, v); }, help);
  };

  // gen
  auto* gen = app.add_subcommand("gen", "Generate an occluded dataset from a mesh tree");
  std::string meshes;
  std::size_t views = 20;
  std::string split_mode = "cross-view";
  gen->add_option("--meshes", meshes, "Mesh root: <class>/<split>/*.off")->required()->check(CLI::ExistingDirectory);
  gen->add_option("--views", views, "Camera views per mesh")->check(CLI::IsMember({20}));
  gen->add_option("--split", split_mode, "Dataset split")->check(CLI::IsMember({"cross-view"}));
  bind(gen, "--points", "gen.points", "Points per output cloud");
  bind(gen, "--density", "gen.density", "Surface samples before projection");
  bind(gen, "--threshold", "gen.threshold", "Minimum non-empty pixels");
  bind(gen, "--radius", "gen.radius", "Camera distance from the origin");

  // sample
  auto* smp = app.add_subcommand("sample", "Downsample one cloud");
  std::string smp_in, smp_method, smp_ckpt, smp_dst;
  std::size_t smp_m = 0;
  bool smp_soft = false, smp_ply = false;
  smp->add_option("--in", smp_in, "Input PCB1 cloud")->required()->check(CLI::ExistingFile);
  smp->add_option("--method", smp_method, "rs, fps or cps")->required()->check(CLI::IsMember({"rs", "fps", "cps"}));
  smp->add_option("--m", smp_m, "Output point count")->required();
  smp->add_option("--ckpt", smp_ckpt, "Model checkpoint (cps)");
  smp->add_flag("--soft", smp_soft, "cps: soft weights instead of hard one-hot selection");
  smp->add_option("--dst", smp_dst, "Output PCB1 path");
  smp->add_flag("--ply", smp_ply, "Also write an ASCII PLY next to the output");

  // train / eval / noise
  std::string data, ckpt, split = "test";
  auto* trn = app.add_subcommand("train", "Train a model on a generated dataset");
  trn->add_option("--data", data, "Dataset directory (default: --out)");
  bind(trn, "--epochs", "train.epochs", "Training epochs");
  bind(trn, "--batch", "train.batch_size", "Batch size");
  bind(trn, "--lr", "train.lr", "Base learning rate");
  bind(trn, "--tau-schedule", "train.tau", "cos, lin or exp");
  bind(trn, "--sampler", "model.sampler", "cps, fps or rs");
  bind(trn, "--levels", "model.levels", "Comma separated level sizes");

  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint (or a fresh model)");
  auto* noi = app.add_subcommand("noise", "Robustness sweep over noise replacement ratios");
  for (auto* sub : {evl, noi}) {
    sub->add_option("--data", data, "Dataset directory (default: --out)");
    sub->add_option("--ckpt", ckpt, "Checkpoint; omitted means a freshly initialized model");
    sub->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
    bind(sub, "--votes", "eval.votes", "Voting rounds");
  }
  bind(noi, "--eta", "noise.eta", "Comma separated replace ratios in percent");

  auto* ply = app.add_subcommand("export-ply", "Convert a PCB1 cloud to ASCII PLY");
  std::string ply_in, ply_dst;
  ply->add_option("--in", ply_in, "Input PCB1 cloud")->required()->check(CLI::ExistingFile);
  ply->add_option("--dst", ply_dst, "Output PLY path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kUsageError;
  }

  Context ctx{out, err, default_config(), 0, out_dir};
  try {
    if (!config_path.empty()) ctx.config.merge(KvConfig::load(config_path));
    for (const auto& s : sets) ctx.config.merge(KvConfig::parse(s));
    ctx.config.merge(flags);
    if (seed_given) ctx.config.set("seed", static_cast<std::int64_t>(seed));
    for (const auto& [k, v] : ctx.config.entries()) {
      if (!default_config().contains(k) && k != "model.alpha") throw UsageError("unknown config key '" + k + "'");
    }
    ctx.seed = static_cast<std::uint64_t>(ctx.config.get_int("seed", 0));

    // Validate every section up front so bad values surface as usage errors.
    gen_config(ctx);
    MultiLevelConfig::from_kv(ctx.config.section("model."));
    train_config(ctx);
    eval_options(ctx);
    noise_spec(ctx);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }

  std::size_t n_threads = threads ? threads : threads_from_env();
  if (n_threads == 0) n_threads = std::max(1u, std::thread::hardware_concurrency());
  set_num_threads(n_threads);

  out << "# resolved config\n" << ctx.config.to_comment_block();
  const fs::path data_dir = data.empty() ? ctx.out_dir : fs::path(data);
  try {
    if (*gen) return cmd_gen(ctx, meshes);
    if (*smp) return cmd_sample(ctx, smp_in, smp_method, smp_m, smp_ckpt, smp_soft, smp_dst, smp_ply);
    if (*trn) return cmd_train(ctx, data_dir);
    if (*evl) return cmd_eval(ctx, data_dir, ckpt, split);
    if (*noi) return cmd_noise(ctx, data_dir, ckpt, split);
    if (*ply) return cmd_export_ply(ctx, ply_in, ply_dst);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const harness::DivergenceError& e) {
    err << "error: " << e.what() << "\nlast batch:";
    for (const auto& id : e.batch_ids()) err << " " << id;
    err << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace occlume::cli
