#include "prognet/exp/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <sstream>

#include "prognet/exp/stats.hpp"
#include "prognet/nn/checkpoint.hpp"

namespace prognet::exp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

constexpr std::uint64_t kColumnSalt = 0xc01;
constexpr std::uint64_t kEvalSalt = 0xe7a1;

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read '" + path.string() + "'");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return nn::fnv1a64(bytes);
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create run directory '" + dir.string() + "': " + ec.message());
}

nlohmann::json column_json(const net::ColumnSpec& s) { return net::to_json(s); }

// A column entry may be a preset name, {"preset": name, overrides...} or a full spec.
net::ColumnSpec column_from_json(const nlohmann::json& j, std::size_t joints) {
  net::ColumnSpec s;
  if (j.is_string()) {
    s = net::preset(j.get<std::string>(), joints);
  } else if (j.is_object() && j.contains("preset")) {
    s = net::preset(j.at("preset").get<std::string>(), joints);
    if (j.contains("proprio_units")) s = net::with_proprio(s, j.at("proprio_units").get<std::size_t>());
  } else if (j.is_object() && j.value("kind", std::string()) == "proprio-only") {
    s = net::proprio_only(joints, j.value("mlp_units", std::size_t{32}), j.value("fc_units", std::size_t{32}),
                          j.value("lstm_units", std::size_t{0}));
  } else {
    s = net::column_spec_from_json(j);
  }
  if (j.is_object()) {
    if (j.contains("lateral_mode")) s.lateral_mode = net::lateral_mode_from_string(j.at("lateral_mode").get<std::string>());
    if (j.contains("label")) s.label = j.at("label").get<std::string>();
  }
  s.joints = joints;
  return s;
}

net::InputSpec input_for(const env::EnvConfig& e) {
  net::InputSpec in;
  in.channels = 3;
  in.height = e.image_size;
  in.width = e.image_size;
  in.proprio_dim = e.proprio ? 2 * e.joints : 0;
  return in;
}

// Environment with the run's seed folded into the configured seed family.
env::EnvConfig seeded_env(env::EnvConfig e, std::uint64_t run_seed) {
  if (!e.perturbation_seed) e.perturbation_seed = e.seed;
  e.seed = mix(e.seed, run_seed);
  return e;
}

nlohmann::json eval_json(const rl::EvalReport& r) {
  return {{"episodes", r.episodes},
          {"mean_return", r.mean_return},
          {"median_return", r.median_return},
          {"success_rate", r.success_rate},
          {"returns", r.returns}};
}

rl::EvalReport eval_from_json(const nlohmann::json& j) {
  rl::EvalReport r;
  r.episodes = j.at("episodes").get<std::size_t>();
  r.mean_return = j.at("mean_return").get<double>();
  r.median_return = j.at("median_return").get<double>();
  r.success_rate = j.at("success_rate").get<double>();
  r.returns = j.at("returns").get<std::vector<double>>();
  return r;
}

// A finished run in `dir` produced by the same config, with its final weights loaded into `net`.
std::optional<RunOutput> load_completed(const ExperimentConfig& config, const fs::path& dir,
                                        net::ProgressiveNetwork& net) {
  for (const char* f : {"metadata.json", "eval.json", "curve.csv", "final.bin", "checkpoint.bin"}) {
    if (!fs::exists(dir / f)) return std::nullopt;
  }
  RunOutput out;
  try {
    out.record = run_record_from_json(read_json(dir / "metadata.json"));
    if (out.record.config_hash != config_hash(config)) return std::nullopt;
    const nn::Checkpoint ckpt = nn::Checkpoint::load(dir / "final.bin");
    if (ckpt.architecture_hash != net.architecture_hash()) return std::nullopt;
    const auto ev = read_json(dir / "eval.json");
    out.initial_eval = eval_from_json(ev.at("initial"));
    out.final_eval = eval_from_json(ev.at("final"));
    std::ifstream is(dir / "curve.csv");
    out.curve = rl::LearningCurve::read_csv(is);
    out.curve.env_steps = out.record.env_steps;
    auto params = net.parameters();
    ckpt.apply_to(params);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  out.dir = dir;
  return out;
}

void save_checkpoint(const net::ProgressiveNetwork& net, const fs::path& path) {
  const auto params = net.parameters();
  nn::Checkpoint::from_parameters(params, net.architecture_hash()).save(path);
}

struct TrainJob {
  std::string mode;
  net::ProgressiveNetwork* network = nullptr;
  env::EnvConfig env;  // already seeded
  rl::TrainConfig train;
  fs::path dir;
  nlohmann::json extra = nlohmann::json::object();
};

RunOutput train_and_save(const ExperimentConfig& config, TrainJob job) {
  net::ProgressiveNetwork& net = *job.network;
  rl::check_compatible(net, job.env);
  if (config.resume) {
    if (auto done = load_completed(config, job.dir, net)) return *done;
  }
  make_dir(job.dir);

  RunOutput out;
  out.dir = job.dir;
  const std::uint64_t eval_seed = mix(config.seed, kEvalSalt);
  env::ReacherEnv eval_env(job.env);
  out.initial_eval = rl::evaluate(net, eval_env, config.eval_episodes, eval_seed);

  write_json(job.dir / "config.json", to_json(config));
  write_json(job.dir / "architecture.json", net.architecture());

  const auto start = std::chrono::steady_clock::now();
  rl::TrainResult result;
  std::string status = "ok";
  try {
    if (config.deterministic || job.train.workers <= 1) {
      rl::TrainConfig tc = job.train;
      tc.workers = 1;
      env::ReacherEnv env(job.env);
      result = rl::train_a2c(net, env, tc);
    } else {
      const env::EnvConfig base = job.env;
      result = rl::train_a3c(
          net,
          [base](std::size_t worker) {
            env::EnvConfig e = base;
            if (worker > 0) e.seed = mix(base.seed, worker);
            return env::ReacherEnv(e);
          },
          job.train);
    }
  } catch (const nn::NumericalFault& e) {
    status = std::string("failed: ") + e.what();
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  out.curve = result.curve;
  {
    std::ofstream os(job.dir / "curve.csv");
    if (!os) throw IoError("cannot write curve in '" + job.dir.string() + "'");
    out.curve.write_csv(os, config.deterministic);
  }
  write_smoothed_csv(job.dir / "curve_smoothed.csv", out.curve, config.smoothing_window);

  save_checkpoint(net, job.dir / "final.bin");
  if (result.best_values) {
    net::ProgressiveNetwork best = net.clone();
    auto params = best.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      std::copy((*result.best_values)[i].begin(), (*result.best_values)[i].end(), params[i]->value.mutable_data().begin());
    }
    save_checkpoint(best, job.dir / "checkpoint.bin");
  } else {
    save_checkpoint(net, job.dir / "checkpoint.bin");
  }

  out.final_eval = rl::evaluate(net, eval_env, config.eval_episodes, eval_seed);

  RunRecord& rec = out.record;
  rec.mode = job.mode;
  rec.config_hash = config_hash(config);
  rec.seed = config.seed;
  rec.learning_rate = job.train.learning_rate;
  rec.entropy_cost = job.train.entropy_cost;
  rec.final_median_return = out.curve.final_median(config.final_window);
  rec.env_steps = out.curve.env_steps;
  rec.curve_path = job.dir / "curve.csv";
  rec.status = status;

  nlohmann::json meta = to_json(rec);
  meta["env_seed"] = job.env.seed;
  meta["train_seed"] = job.train.seed;
  meta["eval_seed"] = eval_seed;
  meta["updates"] = result.updates;
  meta["best_trailing_median"] = result.best_score;
  meta["wall_seconds"] = config.deterministic ? 0.0 : wall;
  meta["initial_eval"] = eval_json(out.initial_eval);
  meta["final_eval"] = eval_json(out.final_eval);
  meta["param_count"] = net.param_count(true);
  meta["trainable_param_count"] = [&] {
    std::size_t n = 0;
    for (auto* p : net.trainable_parameters()) n += p->numel();
    return n;
  }();
  for (auto it = job.extra.begin(); it != job.extra.end(); ++it) meta[it.key()] = it.value();
  write_json(job.dir / "metadata.json", meta);
  write_json(job.dir / "eval.json", {{"initial", eval_json(out.initial_eval)}, {"final", eval_json(out.final_eval)}});
  return out;
}

const fs::path& require_source(const ExperimentConfig& c) {
  if (!c.source_run) throw ExperimentConfigError(to_string(c.kind) + " needs a source_run");
  return *c.source_run;
}

}  // namespace

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::train_sim: return "train-sim";
    case ExperimentKind::transfer_progressive: return "transfer-progressive";
    case ExperimentKind::transfer_finetune: return "transfer-finetune";
    case ExperimentKind::train_scratch: return "train-scratch";
    case ExperimentKind::conveyor_3col: return "conveyor-3col";
    case ExperimentKind::sweep: return "sweep";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::train_sim, ExperimentKind::transfer_progressive, ExperimentKind::transfer_finetune,
                 ExperimentKind::train_scratch, ExperimentKind::conveyor_3col, ExperimentKind::sweep}) {
    if (to_string(k) == s) return k;
  }
  throw ExperimentConfigError("unknown experiment kind '" + s + "'");
}

bool is_transfer(ExperimentKind k) {
  return k == ExperimentKind::transfer_progressive || k == ExperimentKind::transfer_finetune;
}

std::string to_string(TransferMode m) {
  switch (m) {
    case TransferMode::progressive: return "progressive";
    case TransferMode::finetune: return "finetune";
    case TransferMode::scratch: return "scratch";
  }
  return "?";
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["schema_version"] = ExperimentConfig::kSchemaVersion;
  j["kind"] = to_string(c.kind);
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir.string();
  j["source_env"] = env::to_json(c.source_env);
  j["target_env"] = env::to_json(c.target_env);
  j["column"] = column_json(c.column);
  j["source_run"] = c.source_run ? nlohmann::json(c.source_run->string()) : nlohmann::json(nullptr);
  j["train"] = rl::to_json(c.train);
  j["eval_episodes"] = c.eval_episodes;
  j["smoothing_window"] = c.smoothing_window;
  j["final_window"] = c.final_window;
  j["deterministic"] = c.deterministic;
  j["resume"] = c.resume;
  j["sweep"] = {{"samples", c.sweep.samples},
                {"mode", to_string(c.sweep.mode)},
                {"learning_rate", {c.sweep.learning_rate.first, c.sweep.learning_rate.second}},
                {"entropy_cost", {c.sweep.entropy_cost.first, c.sweep.entropy_cost.second}}};
  j["conveyor"] = {{"second", column_json(c.conveyor.second)},
                   {"third", column_json(c.conveyor.third)},
                   {"static_steps", c.conveyor.static_steps}};
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw ExperimentConfigError("experiment config must be a JSON object");
    const int version = j.value("schema_version", -1);
    if (version != ExperimentConfig::kSchemaVersion) {
      throw ExperimentConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                                  std::to_string(ExperimentConfig::kSchemaVersion) + ")");
    }
    c.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir.string());
    if (j.contains("source_env")) c.source_env = env::env_config_from_json(j.at("source_env"));
    c.target_env = j.contains("target_env") ? env::env_config_from_json(j.at("target_env")) : c.source_env;
    const std::size_t joints = (is_transfer(c.kind) || c.kind == ExperimentKind::train_scratch ||
                                c.kind == ExperimentKind::conveyor_3col)
                                   ? c.target_env.joints
                                   : c.source_env.joints;
    c.column = j.contains("column") ? column_from_json(j.at("column"), joints) : net::wide_recurrent(joints);
    if (j.contains("source_run") && !j.at("source_run").is_null()) c.source_run = j.at("source_run").get<std::string>();
    if (j.contains("train")) c.train = rl::train_config_from_json(j.at("train"));
    c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
    c.smoothing_window = j.value("smoothing_window", c.smoothing_window);
    c.final_window = j.value("final_window", c.final_window);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.resume = j.value("resume", c.resume);
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      c.sweep.samples = s.value("samples", c.sweep.samples);
      if (s.contains("mode")) c.sweep.mode = experiment_kind_from_string(s.at("mode").get<std::string>());
      if (s.contains("learning_rate")) c.sweep.learning_rate = {s["learning_rate"].at(0), s["learning_rate"].at(1)};
      if (s.contains("entropy_cost")) c.sweep.entropy_cost = {s["entropy_cost"].at(0), s["entropy_cost"].at(1)};
    }
    c.conveyor.second = net::with_proprio(net::narrow_recurrent(c.target_env.joints), 32);
    c.conveyor.third = net::proprio_only(c.target_env.joints, 32, 32, 0);
    if (j.contains("conveyor")) {
      const auto& cv = j.at("conveyor");
      if (cv.contains("second")) c.conveyor.second = column_from_json(cv.at("second"), c.target_env.joints);
      if (cv.contains("third")) c.conveyor.third = column_from_json(cv.at("third"), c.target_env.joints);
      c.conveyor.static_steps = cv.value("static_steps", c.conveyor.static_steps);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ExperimentConfigError(std::string("malformed experiment config: ") + e.what());
  } catch (const ExperimentConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ExperimentConfigError(e.what());
  }

  if (c.eval_episodes == 0) throw ExperimentConfigError("eval_episodes must be positive");
  if (c.smoothing_window == 0 || c.smoothing_window % 2 == 0) throw ExperimentConfigError("smoothing_window must be odd");
  if ((is_transfer(c.kind) || c.kind == ExperimentKind::conveyor_3col) && !c.source_run) {
    throw ExperimentConfigError(to_string(c.kind) + " requires source_run");
  }
  if (c.kind == ExperimentKind::sweep) {
    if (c.sweep.samples < 2) throw ExperimentConfigError("a sweep needs at least 2 samples");
    if (c.sweep.mode == ExperimentKind::sweep || c.sweep.mode == ExperimentKind::conveyor_3col) {
      throw ExperimentConfigError("sweep mode must be a single-run experiment kind");
    }
    if (is_transfer(c.sweep.mode) && !c.source_run) throw ExperimentConfigError("transfer sweeps require source_run");
    for (auto r : {c.sweep.learning_rate, c.sweep.entropy_cost}) {
      if (!(r.first > 0.0 && r.second >= r.first)) throw ExperimentConfigError("sweep ranges must satisfy 0 < lo <= hi");
    }
  }
  try {
    (void)c.source_env.resolved();
    (void)c.target_env.resolved();
  } catch (const env::EnvConfigError& e) {
    throw ExperimentConfigError(e.what());
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) { return experiment_config_from_json(read_json(path)); }

std::uint64_t config_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("out_dir");
  j.erase("resume");
  return nn::fnv1a64(j.dump());
}

nlohmann::json to_json(const RunRecord& r) {
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << r.config_hash;
  return {{"mode", r.mode},
          {"config_hash", hash.str()},
          {"seed", r.seed},
          {"learning_rate", r.learning_rate},
          {"entropy_cost", r.entropy_cost},
          {"final_median_return", r.final_median_return},
          {"env_steps", r.env_steps},
          {"curve_path", r.curve_path.string()},
          {"status", r.status}};
}

RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  try {
    r.mode = j.at("mode").get<std::string>();
    r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    r.seed = j.at("seed").get<std::uint64_t>();
    r.learning_rate = j.at("learning_rate").get<double>();
    r.entropy_cost = j.at("entropy_cost").get<double>();
    r.final_median_return = j.at("final_median_return").get<double>();
    r.env_steps = j.at("env_steps").get<std::size_t>();
    r.curve_path = j.at("curve_path").get<std::string>();
    r.status = j.at("status").get<std::string>();
  } catch (const std::exception& e) {
    throw IoError(std::string("malformed run record: ") + e.what());
  }
  return r;
}

net::ProgressiveNetwork load_run_network(const fs::path& run_dir, const std::optional<net::InputSpec>& input_override,
                                         const std::string& checkpoint) {
  nlohmann::json arch = read_json(run_dir / "architecture.json");
  const fs::path ckpt_path = run_dir / checkpoint;
  if (!fs::exists(ckpt_path)) throw IoError("missing checkpoint '" + ckpt_path.string() + "'");
  const nn::Checkpoint ckpt = nn::Checkpoint::load(ckpt_path);
  net::ProgressiveNetwork stored = net::ProgressiveNetwork::from_architecture(arch);
  if (stored.architecture_hash() != ckpt.architecture_hash) {
    throw ExperimentConfigError("checkpoint '" + ckpt_path.string() + "' does not match its architecture file");
  }
  net::ProgressiveNetwork net = std::move(stored);
  if (input_override) {
    const auto& old = net.input();
    if (old.channels != input_override->channels || old.height != input_override->height ||
        old.width != input_override->width) {
      throw ExperimentConfigError("source run was trained on " + std::to_string(old.height) + "x" +
                                  std::to_string(old.width) + " images; the target environment renders " +
                                  std::to_string(input_override->height) + "x" + std::to_string(input_override->width));
    }
    arch["input"] = net::to_json(*input_override);
    net = net::ProgressiveNetwork::from_architecture(arch);
  }
  auto params = net.parameters();
  ckpt.apply_to(params);
  return net;
}

void write_smoothed_csv(const fs::path& path, const rl::LearningCurve& curve, std::size_t window) {
  std::vector<double> raw;
  for (const auto& e : curve.episodes) raw.push_back(e.episode_return);
  const auto smooth = median_filter(raw, window);
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << "episode_index,env_steps,return,smoothed_return\n";
  for (std::size_t i = 0; i < raw.size(); ++i) {
    os << curve.episodes[i].episode_index << ',' << curve.episodes[i].env_steps << ',' << raw[i] << ',' << smooth[i]
       << '\n';
  }
}

RunOutput run_train_sim(const ExperimentConfig& config) {
  if (config.kind != ExperimentKind::train_sim) throw ExperimentConfigError("run_train_sim needs kind train-sim");
  const env::EnvConfig e = seeded_env(config.source_env, config.seed);
  net::ProgressiveNetwork net(input_for(e));
  net.add_column(config.column, mix(config.seed, kColumnSalt));
  rl::TrainConfig tc = config.train;
  tc.seed = config.seed;
  return train_and_save(config, {"train-sim", &net, e, tc, config.out_dir, {}});
}

RunOutput run_transfer(const ExperimentConfig& config, TransferMode mode) {
  const env::EnvConfig e = seeded_env(config.target_env, config.seed);
  const std::uint64_t column_seed = mix(config.seed, kColumnSalt);
  net::ProgressiveNetwork net;
  nlohmann::json extra = nlohmann::json::object();
  std::optional<fs::path> source_ckpt;
  std::uint64_t source_hash_before = 0;
  if (mode == TransferMode::scratch) {
    net = net::ProgressiveNetwork(input_for(e));
    net.add_column(config.column, column_seed);
  } else {
    const fs::path& src = require_source(config);
    source_ckpt = src / "checkpoint.bin";
    source_hash_before = file_hash(*source_ckpt);
    net = load_run_network(src, input_for(e));
    if (mode == TransferMode::progressive) {
      const std::size_t from = net.active();
      net.add_column(config.column, column_seed, from);
    } else {
      net.unfreeze_column(net.active());
    }
    extra["source_run"] = src.string();
  }
  rl::TrainConfig tc = config.train;
  tc.seed = config.seed;
  RunOutput out = train_and_save(config, {"transfer-" + to_string(mode), &net, e, tc, config.out_dir, extra});
  if (source_ckpt) {
    const std::uint64_t after = file_hash(*source_ckpt);
    auto meta = read_json(config.out_dir / "metadata.json");
    meta["source_checkpoint_hash_before"] = source_hash_before;
    meta["source_checkpoint_hash_after"] = after;
    write_json(config.out_dir / "metadata.json", meta);
    if (after != source_hash_before) throw IoError("source checkpoint changed during transfer");
  }
  return out;
}

RunOutput run_single(const ExperimentConfig& config) {
  switch (config.kind) {
    case ExperimentKind::train_sim: return run_train_sim(config);
    case ExperimentKind::transfer_progressive: return run_transfer(config, TransferMode::progressive);
    case ExperimentKind::transfer_finetune: return run_transfer(config, TransferMode::finetune);
    case ExperimentKind::train_scratch: return run_transfer(config, TransferMode::scratch);
    default: throw ExperimentConfigError("run_single cannot run kind " + to_string(config.kind));
  }
}

SweepOutput run_sweep(const ExperimentConfig& config) {
  if (config.kind != ExperimentKind::sweep) throw ExperimentConfigError("run_sweep needs kind sweep");
  if (config.sweep.samples < 2) throw ExperimentConfigError("a sweep needs at least 2 samples");
  make_dir(config.out_dir);
  write_json(config.out_dir / "config.json", to_json(config));
  std::mt19937_64 rng(mix(config.seed, 0x5eeb));
  SweepOutput out;
  std::ofstream records(config.out_dir / "records.jsonl");
  if (!records) throw IoError("cannot write sweep records in '" + config.out_dir.string() + "'");
  std::vector<double> finals;
  for (std::size_t i = 0; i < config.sweep.samples; ++i) {
    ExperimentConfig sub = config;
    sub.kind = config.sweep.mode;
    sub.seed = mix(config.seed, i + 1);
    sub.train.learning_rate = log_uniform(rng, config.sweep.learning_rate.first, config.sweep.learning_rate.second);
    sub.train.entropy_cost = log_uniform(rng, config.sweep.entropy_cost.first, config.sweep.entropy_cost.second);
    std::ostringstream name;
    name << "run_" << std::setw(3) << std::setfill('0') << i;
    sub.out_dir = config.out_dir / name.str();
    RunOutput r = run_single(sub);
    out.records.push_back(r.record);
    finals.push_back(r.record.final_median_return);
    records << to_json(r.record).dump() << '\n';
    records.flush();
  }
  out.best = static_cast<std::size_t>(std::max_element(finals.begin(), finals.end()) - finals.begin());
  out.median_final = median(finals);
  out.iqr_final = interquartile_range(finals);
  write_json(config.out_dir / "summary.json", {{"mode", to_string(config.sweep.mode)},
                                               {"samples", finals.size()},
                                               {"median_final_return", out.median_final},
                                               {"iqr_final_return", out.iqr_final},
                                               {"best_index", out.best},
                                               {"best", to_json(out.records[out.best])}});
  return out;
}

std::size_t steps_to_fraction(const rl::LearningCurve& curve, double fraction, std::size_t smoothing_window,
                              std::size_t final_window) {
  if (curve.episodes.empty()) return curve.env_steps;
  const double final_return = curve.final_median(final_window);
  if (!(final_return > 0.0)) return curve.env_steps;
  std::vector<double> raw;
  for (const auto& e : curve.episodes) raw.push_back(e.episode_return);
  const std::size_t w = std::clamp<std::size_t>(smoothing_window, 1, raw.size());
  for (std::size_t i = w - 1; i < raw.size(); ++i) {
    if (median(std::span<const double>(raw).subspan(i + 1 - w, w)) >= fraction * final_return)
      return curve.episodes[i].env_steps;
  }
  return curve.env_steps;
}

ConveyorOutput run_conveyor_3col(const ExperimentConfig& config) {
  if (config.kind != ExperimentKind::conveyor_3col) throw ExperimentConfigError("run_conveyor_3col needs kind conveyor-3col");
  if (!config.target_env.proprio) throw ExperimentConfigError("conveyor experiment needs proprio in the target env");
  if (!config.target_env.conveyor.enabled) throw ExperimentConfigError("conveyor experiment needs the conveyor enabled");
  const fs::path& src = require_source(config);
  make_dir(config.out_dir);
  write_json(config.out_dir / "config.json", to_json(config));

  const env::EnvConfig moving = seeded_env(config.target_env, config.seed);
  env::EnvConfig still = moving;
  still.conveyor.enabled = false;
  const net::InputSpec in = input_for(moving);
  rl::TrainConfig tc = config.train;
  tc.seed = config.seed;

  ConveyorOutput out;
  {
    net::ProgressiveNetwork net = load_run_network(src, in);
    net.add_column(config.conveyor.second, mix(config.seed, kColumnSalt), net.active());
    out.direct = train_and_save(config, {"conveyor-direct", &net, moving, tc, config.out_dir / "direct", {}});
  }
  {
    net::ProgressiveNetwork net = load_run_network(src, in);
    net.add_column(config.conveyor.second, mix(config.seed, kColumnSalt), net.active());
    rl::TrainConfig static_tc = tc;
    static_tc.total_steps = config.conveyor.static_steps;
    out.curriculum_static =
        train_and_save(config, {"conveyor-static", &net, still, static_tc, config.out_dir / "curriculum_static", {}});
    net.add_column(config.conveyor.third, mix(config.seed, kColumnSalt + 1), net.active());
    out.curriculum_third =
        train_and_save(config, {"conveyor-third", &net, moving, tc, config.out_dir / "curriculum_third", {}});
  }
  out.direct_steps_to_80 = steps_to_fraction(out.direct.curve, 0.8, config.smoothing_window, config.final_window);
  out.curriculum_steps_to_80 =
      steps_to_fraction(out.curriculum_third.curve, 0.8, config.smoothing_window, config.final_window);
  write_json(config.out_dir / "summary.json", {{"direct_steps_to_80", out.direct_steps_to_80},
                                               {"curriculum_steps_to_80", out.curriculum_steps_to_80},
                                               {"direct_final", out.direct.record.final_median_return},
                                               {"curriculum_final", out.curriculum_third.record.final_median_return}});
  return out;
}

std::vector<ReportRow> export_report(const fs::path& dir, std::size_t smoothing_window) {
  if (!fs::is_directory(dir)) throw IoError("report directory '" + dir.string() + "' does not exist");
  std::map<std::string, std::vector<double>> finals;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().filename() != "metadata.json") continue;
    const RunRecord r = run_record_from_json(read_json(entry.path()));
    finals[r.mode].push_back(r.final_median_return);
    const fs::path curve_path = entry.path().parent_path() / "curve.csv";
    if (fs::exists(curve_path)) {
      std::ifstream is(curve_path);
      write_smoothed_csv(entry.path().parent_path() / "curve_smoothed.csv", rl::LearningCurve::read_csv(is),
                         smoothing_window);
    }
  }
  if (finals.empty()) throw IoError("no completed runs under '" + dir.string() + "'");
  std::vector<ReportRow> rows;
  for (const auto& [mode, v] : finals) {
    ReportRow row;
    row.mode = mode;
    row.runs = v.size();
    row.median = median(v);
    row.q1 = quantile(v, 0.25);
    row.q3 = quantile(v, 0.75);
    row.iqr = row.q3 - row.q1;
    rows.push_back(row);
  }
  std::ofstream os(dir / "report.csv");
  if (!os) throw IoError("cannot write report in '" + dir.string() + "'");
  os << "mode,runs,median_final_return,q1,q3,iqr\n";
  for (const auto& r : rows) os << r.mode << ',' << r.runs << ',' << r.median << ',' << r.q1 << ',' << r.q3 << ',' << r.iqr << '\n';
  return rows;
}

}  // namespace prognet::exp
