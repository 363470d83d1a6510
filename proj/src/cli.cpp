// SPDX-License-Identifier: Apache-2.0
#include "maskfill/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "maskfill/config.hpp"
#include "maskfill/error.hpp"
#include "maskfill/image_io.hpp"
#include "maskfill/metrics.hpp"
#include "maskfill/noise.hpp"
#include "maskfill/pretrain.hpp"
#include "maskfill/zeroshot.hpp"

namespace maskfill {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class NoDataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class Stopwatch {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::uint64_t name_hash(const std::string &s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<fs::path> collect_inputs(const std::vector<std::string> &args) {
  std::vector<fs::path> files;
  for (const auto &a : args) {
    const fs::path p(a);
    if (fs::is_directory(p)) {
      const auto found = list_images(p);
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      files.push_back(p);
    } else {
      throw IoError(a + ": no such file or directory");
    }
  }
  if (files.empty())
    throw NoDataError("no input images");
  return files;
}

fs::path output_path(const fs::path &dir, const fs::path &input, std::size_t channels,
                     bool float_map = false) {
  if (float_map)
    return dir / (input.stem().string() + ".pfm");
  return dir / (input.stem().string() + (channels == 1 ? ".pgm" : ".ppm"));
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  file << text;
  if (!file)
    throw IoError(path.string() + ": write failed");
}

void write_manifest(const fs::path &path, const json &manifest) {
  write_text(path, manifest.dump(2) + "\n");
}

json read_json(const fs::path &path) {
  std::ifstream file(path);
  if (!file)
    throw IoError(path.string() + ": cannot open");
  try {
    return json::parse(file);
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

json config_json(const ConfigMap &map) {
  json j = json::object();
  for (const auto &[k, v] : map)
    j[k] = v;
  return j;
}

void print_config(std::ostream &out, const ConfigMap &map) {
  out << "# effective config\n" << format_config_text(map) << std::flush;
}

// Runs job(i) for i in [0, n) on at most `workers` threads. The first
// exception thrown by any job is rethrown after all threads finish.
template <typename Job> void run_pool(std::size_t n, std::size_t workers, Job job) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure)
          failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w)
      threads.emplace_back(worker);
    for (auto &t : threads)
      t.join();
  }
  if (failure)
    std::rethrow_exception(failure);
}

// ---------------------------------------------------------------- denoise

struct DenoiseArgs {
  std::vector<std::string> inputs;
  std::string output_dir;
  std::string config_file;
  std::string manifest;
  std::string reference_dir;
  std::optional<std::string> preset, seed, weights, iters, beta, mask_ratio, pd, ensemble, lr,
      plateau_window, plateau_threshold;
  bool no_mask_loss = false;
  bool shared_channels = false;
  bool trace = false;
  bool strict = false;
  std::size_t jobs = 1;
};

void add_config_flags(CLI::App &cmd, DenoiseArgs &a) {
  cmd.add_option("--config", a.config_file, "Text config or JSON run manifest");
  cmd.add_option("--preset", a.preset, "synthetic-default, synthetic-faster, real-default, real-sidd");
  cmd.add_option("--seed", a.seed, "Random seed");
  cmd.add_option("--weights", a.weights, "'scratch' or a weight file");
  cmd.add_option("--iters", a.iters, "Iterations per image");
  cmd.add_option("--beta", a.beta, "EMA decay");
  cmd.add_option("--mask-ratio", a.mask_ratio, "Probability a pixel is hidden");
  cmd.add_option("--pd", a.pd, "Pixel-shuffle factor (1 disables)");
  cmd.add_option("--ensemble", a.ensemble, "ema, average, last or avg-after=K");
  cmd.add_option("--lr", a.lr, "Adam learning rate");
  cmd.add_option("--plateau-window", a.plateau_window, "Early-stop window (0 disables)");
  cmd.add_option("--plateau-threshold", a.plateau_threshold, "Relative loss improvement to keep going");
  cmd.add_flag("--no-mask-loss", a.no_mask_loss, "Supervise every pixel instead of masked ones");
  cmd.add_flag("--shared-channels", a.shared_channels, "One mask for all channels");
}

ConfigMap effective_config(const DenoiseArgs &a) {
  ConfigMap map;
  if (!a.config_file.empty())
    map = read_config_file(a.config_file);
  auto set = [&](const char *key, const std::optional<std::string> &v) {
    if (v)
      map[key] = *v;
  };
  set("preset", a.preset);
  set("seed", a.seed);
  set("weights", a.weights);
  set("iters", a.iters);
  set("beta", a.beta);
  set("mask_ratio", a.mask_ratio);
  set("pd", a.pd);
  set("ensemble", a.ensemble);
  set("lr", a.lr);
  set("plateau_window", a.plateau_window);
  set("plateau_threshold", a.plateau_threshold);
  if (a.no_mask_loss)
    map["mask_loss"] = "false";
  if (a.shared_channels)
    map["shared_channels"] = "true";
  return denoise_config_to_map(denoise_config_from_map(map));
}

std::optional<fs::path> find_reference(const fs::path &dir, const fs::path &input) {
  for (const auto &p : list_images(dir))
    if (p.stem() == input.stem())
      return p;
  return std::nullopt;
}

struct DenoiseRun {
  json rows = json::array();
  double seconds = 0.0;
};

DenoiseRun denoise_files(const DenoiseConfig &cfg, const std::vector<fs::path> &inputs,
                         const fs::path &out_dir, const DenoiseArgs &a, std::ostream &out) {
  fs::create_directories(out_dir);
  const Stopwatch total;
  std::vector<json> rows(inputs.size());
  std::mutex out_mutex;
  run_pool(inputs.size(), a.jobs, [&](std::size_t i) {
    const Stopwatch clock;
    const fs::path &input = inputs[i];
    const Image x = load_image(input).pixels;
    std::optional<Image> reference;
    if (!a.reference_dir.empty()) {
      if (auto ref = find_reference(a.reference_dir, input))
        reference = match_channels(load_image(*ref).pixels, x.dim(1));
    }
    Hourglass<float> model = make_denoiser(cfg);
    const DenoiseResult res = denoise(model, cfg, x, reference ? &*reference : nullptr);
    const fs::path target = output_path(out_dir, input, x.dim(1));
    save_image(res.output, target);
    if (a.trace)
      write_text(out_dir / (input.stem().string() + ".trace.jsonl"), trace_jsonl(res.trace));

    json row;
    row["input"] = input.string();
    row["input_digest"] = file_digest(input);
    row["output"] = target.filename().string();
    row["output_digest"] = file_digest(target);
    row["iterations_run"] = res.iterations_run;
    row["never_masked"] = res.never_masked;
    row["final_loss"] = res.trace.empty() ? 0.0 : res.trace.back().loss;
    if (reference) {
      row["psnr_input"] = psnr(x, *reference);
      row["psnr"] = psnr(quantize8(res.output), *reference);
      row["ssim"] = ssim(quantize8(res.output), *reference);
    }
    if (!a.strict)
      row["seconds"] = clock.seconds();
    std::lock_guard lock(out_mutex);
    out << input.string() << " -> " << target.string();
    if (reference)
      out << "  psnr " << format_number(row["psnr_input"].get<double>()) << " -> "
          << format_number(row["psnr"].get<double>());
    out << "\n" << std::flush;
    rows[i] = std::move(row);
  });
  DenoiseRun run;
  for (auto &r : rows)
    run.rows.push_back(std::move(r));
  run.seconds = total.seconds();
  return run;
}

json denoise_manifest(const std::string &command, const ConfigMap &map, const DenoiseConfig &cfg,
                      const DenoiseRun &run, bool strict) {
  json m;
  m["tool"] = "maskfill";
  m["command"] = command;
  m["strict"] = strict;
  m["config"] = config_json(map);
  m["seed"] = cfg.seed;
  m["weights"] = cfg.init_weights;
  m["weights_digest"] =
      cfg.init_weights == "scratch" ? json(nullptr) : json(file_digest(cfg.init_weights));
  m["images"] = run.rows;
  if (!strict)
    m["timings"] = {{"total_seconds", run.seconds}};
  return m;
}

int cmd_denoise(const DenoiseArgs &a, std::ostream &out) {
  const ConfigMap map = effective_config(a);
  const DenoiseConfig cfg = denoise_config_from_map(map);
  print_config(out, map);
  const auto inputs = collect_inputs(a.inputs);
  const fs::path out_dir(a.output_dir);
  const DenoiseRun run = denoise_files(cfg, inputs, out_dir, a, out);
  const fs::path manifest = a.manifest.empty() ? out_dir / "manifest.json" : fs::path(a.manifest);
  write_manifest(manifest, denoise_manifest("denoise", map, cfg, run, a.strict));
  out << "manifest: " << manifest.string() << "\n";
  return kExitOk;
}

// Re-runs a denoise manifest in strict mode and compares output digests.
int cmd_replay(const std::string &manifest_path, const std::string &output_dir, std::size_t jobs,
               std::ostream &out, std::ostream &err) {
  const json m = read_json(manifest_path);
  if (m.value("command", "") != "denoise")
    throw ConfigError(manifest_path + ": only denoise manifests can be replayed");
  DenoiseArgs a;
  a.config_file = manifest_path;
  a.output_dir = output_dir;
  a.strict = true;
  a.jobs = jobs;
  for (const auto &row : m.at("images"))
    a.inputs.push_back(row.at("input").get<std::string>());
  const ConfigMap map = effective_config(a);
  const DenoiseConfig cfg = denoise_config_from_map(map);
  print_config(out, map);
  if (m.contains("weights_digest") && m["weights_digest"].is_string() &&
      file_digest(cfg.init_weights) != m["weights_digest"].get<std::string>())
    err << "warning: weight file digest differs from the manifest\n";

  const DenoiseRun run = denoise_files(cfg, collect_inputs(a.inputs), output_dir, a, out);
  write_manifest(fs::path(output_dir) / "manifest.json",
                 denoise_manifest("denoise", map, cfg, run, true));
  bool all_match = true;
  for (std::size_t i = 0; i < run.rows.size(); ++i) {
    const bool same = run.rows[i]["output_digest"] == m["images"][i]["output_digest"];
    all_match = all_match && same;
    out << (same ? "match    " : "MISMATCH ") << run.rows[i]["output"].get<std::string>() << "\n";
  }
  return all_match ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- pretrain

struct PretrainArgs {
  PretrainConfig cfg;
  std::string corpus;
  std::string weights_out;
  std::string log;
  std::string manifest;
  std::size_t report_every = 100;
  bool strict = false;
};

ConfigMap pretrain_map(const PretrainConfig &c) {
  return {
      {"corpus", c.corpus_dir.string()},
      {"crop", std::to_string(c.crop_size)},
      {"batch", std::to_string(c.batch_size)},
      {"steps", std::to_string(c.total_steps)},
      {"lr0", format_number(c.lr0)},
      {"lr_min", format_number(c.lr_min)},
      {"mask_ratio", format_number(c.mask_ratio)},
      {"shared_channels", c.shared_channels ? "true" : "false"},
      {"seed", std::to_string(c.seed)},
      {"in_channels", std::to_string(c.model.in_channels)},
      {"depth", std::to_string(c.model.depth)},
      {"base_channels", std::to_string(c.model.base_channels)},
      {"max_channels", std::to_string(c.model.max_channels)},
      {"skip_connections", c.model.skip_connections ? "true" : "false"},
      {"leaky_slope", format_number(c.model.leaky_slope)},
  };
}

int cmd_pretrain(PretrainArgs &a, std::ostream &out) {
  a.cfg.corpus_dir = a.corpus;
  a.cfg.validate();
  try {
    a.cfg.model.validate();
  } catch (const ContractViolation &e) {
    throw ConfigError(e.what());
  }
  const ConfigMap map = pretrain_map(a.cfg);
  print_config(out, map);
  const Stopwatch clock;
  const PretrainResult res =
      run_pretrain(a.cfg, a.weights_out, a.log, [&](const PretrainLogRow &row) {
        if (a.report_every > 0 && (row.step % a.report_every == 0 || row.step == 1))
          out << "step " << row.step << "  lr " << format_number(row.lr) << "  loss "
              << format_number(row.loss) << "\n"
              << std::flush;
      });
  json m;
  m["tool"] = "maskfill";
  m["command"] = "pretrain";
  m["strict"] = a.strict;
  m["config"] = config_json(map);
  m["seed"] = a.cfg.seed;
  m["corpus_images"] = list_images(a.cfg.corpus_dir).size();
  m["weights"] = a.weights_out;
  m["weights_digest"] = file_digest(a.weights_out);
  m["parameters"] = res.weights.parameter_count();
  m["final_loss"] = res.log.empty() ? 0.0 : res.log.back().loss;
  if (!a.strict)
    m["timings"] = {{"total_seconds", clock.seconds()}};
  const fs::path manifest =
      a.manifest.empty() ? fs::path(a.weights_out + ".manifest.json") : fs::path(a.manifest);
  write_manifest(manifest, m);
  out << "weights: " << a.weights_out << "\nmanifest: " << manifest.string() << "\n";
  return kExitOk;
}

// --------------------------------------------------------------- add-noise

struct AddNoiseArgs {
  std::vector<std::string> inputs;
  std::string output_dir;
  std::string noise;
  std::string family;
  std::string manifest;
  std::uint64_t seed = 0;
  bool float_output = false;
  bool strict = false;
};

NoiseFamily parse_family(const std::string &name) {
  static const std::map<std::string, NoiseFamily> families = {
      {"gaussian", NoiseFamily::gaussian}, {"poisson", NoiseFamily::poisson},
      {"nlf", NoiseFamily::nlf},           {"speckle", NoiseFamily::speckle},
      {"saltpepper", NoiseFamily::salt_pepper}, {"sp", NoiseFamily::salt_pepper},
  };
  const auto it = families.find(name);
  if (it == families.end())
    throw ConfigError("unknown noise family '" + name + "'");
  return it->second;
}

int cmd_add_noise(const AddNoiseArgs &a, std::ostream &out) {
  if (a.noise.empty() == a.family.empty())
    throw ConfigError("add-noise: give exactly one of --noise and --family");
  std::optional<NoiseModel> fixed;
  if (!a.noise.empty()) {
    fixed = parse_noise(a.noise);
    validate(*fixed);
  }
  const ConfigMap map = {{"noise", fixed ? format_noise(*fixed) : ""},
                         {"family", a.family},
                         {"seed", std::to_string(a.seed)},
                         {"format", a.float_output ? "pfm" : "pnm"}};
  print_config(out, map);

  const Stopwatch clock;
  const auto inputs = collect_inputs(a.inputs);
  const fs::path out_dir(a.output_dir);
  fs::create_directories(out_dir);
  std::string csv = "file,noise_kind,param\n";
  json rows = json::array();
  for (const auto &input : inputs) {
    const Image x = load_image(input).pixels;
    // Each file gets its own stream, keyed by name so the result does not
    // depend on which other files are processed alongside it.
    Rng rng(derive_seed(a.seed, name_hash(input.stem().string()), 0));
    const NoiseModel model = fixed ? *fixed : sample_generalization_noise(parse_family(a.family), rng);
    const Image y = add_noise(x, model, rng);
    const fs::path target = output_path(out_dir, input, x.dim(1), a.float_output);
    save_image(y, target);
    const std::string param = format_number(noise_parameter(model));
    csv += target.filename().string() + "," + noise_kind(model) + "," + param + "\n";
    rows.push_back({{"input", input.string()},
                    {"output", target.filename().string()},
                    {"output_digest", file_digest(target)},
                    {"noise", format_noise(model)}});
    out << input.string() << " -> " << target.string() << "  " << format_noise(model) << "\n";
  }
  write_text(out_dir / "noise.csv", csv);

  json m;
  m["tool"] = "maskfill";
  m["command"] = "add-noise";
  m["strict"] = a.strict;
  m["config"] = config_json(map);
  m["seed"] = a.seed;
  m["images"] = rows;
  if (!a.strict)
    m["timings"] = {{"total_seconds", clock.seconds()}};
  const fs::path manifest = a.manifest.empty() ? out_dir / "manifest.json" : fs::path(a.manifest);
  write_manifest(manifest, m);
  return kExitOk;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string clean_dir;
  std::string test_dir;
  std::string csv;
  std::string manifest;
  bool quantize = false;
};

int cmd_eval(const EvalArgs &a, std::ostream &out, std::ostream &err) {
  print_config(out, {{"clean", a.clean_dir},
                     {"test", a.test_dir},
                     {"quantize", a.quantize ? "true" : "false"}});
  if (!fs::is_directory(a.clean_dir))
    throw IoError(a.clean_dir + ": not a directory");
  if (!fs::is_directory(a.test_dir))
    throw IoError(a.test_dir + ": not a directory");
  const EvalResult res = run_eval(a.clean_dir, a.test_dir, a.quantize);
  for (const auto &name : res.unmatched)
    err << "unmatched: " << name << "\n";
  const std::string csv = res.report.to_csv();
  out << csv;
  if (!a.csv.empty())
    write_text(a.csv, csv);
  if (!a.manifest.empty() || !a.csv.empty()) {
    json m;
    m["tool"] = "maskfill";
    m["command"] = "eval";
    m["config"] = {{"clean", a.clean_dir}, {"test", a.test_dir}, {"quantize", a.quantize}};
    json rows = json::array();
    for (const auto &r : res.report.rows)
      rows.push_back({{"path", r.path},
                      {"noise_kind", r.noise_kind},
                      {"param", r.noise_param},
                      {"psnr", r.psnr_db},
                      {"ssim", r.ssim}});
    m["images"] = rows;
    m["unmatched"] = res.unmatched;
    write_manifest(a.manifest.empty() ? fs::path(a.csv + ".manifest.json") : fs::path(a.manifest),
                   m);
  }
  if (res.report.rows.empty()) {
    err << "eval: no filename-matched pairs\n";
    return kExitNoData;
  }
  return kExitOk;
}

// --------------------------------------------------------- direct-ensemble

struct DirectArgs {
  std::vector<std::string> inputs;
  std::string output_dir;
  std::string weights;
  std::string manifest;
  std::size_t samples = 16;
  double mask_ratio = 0.3;
  bool shared_channels = false;
  std::uint64_t seed = 0;
  bool strict = false;
};

int cmd_direct(const DirectArgs &a, std::ostream &out) {
  if (a.samples < 1)
    throw ConfigError("direct-ensemble: --samples must be at least 1");
  if (a.mask_ratio < 0.0 || a.mask_ratio > 1.0)
    throw ConfigError("direct-ensemble: --mask-ratio must lie in [0,1]");
  const ConfigMap map = {{"weights", a.weights},
                         {"samples", std::to_string(a.samples)},
                         {"mask_ratio", format_number(a.mask_ratio)},
                         {"shared_channels", a.shared_channels ? "true" : "false"},
                         {"seed", std::to_string(a.seed)}};
  print_config(out, map);
  const Stopwatch clock;
  const Hourglass<float> model(load_weights(a.weights));
  const auto inputs = collect_inputs(a.inputs);
  const fs::path out_dir(a.output_dir);
  fs::create_directories(out_dir);
  json rows = json::array();
  for (const auto &input : inputs) {
    const Image x = load_image(input).pixels;
    const Image work = match_channels(x, model.config().in_channels);
    Rng rng(derive_seed(a.seed, 0xde));
    const Image y = match_channels(
        direct_ensemble(model, work, a.mask_ratio, a.samples, rng, a.shared_channels), x.dim(1));
    const fs::path target = output_path(out_dir, input, x.dim(1));
    save_image(y, target);
    rows.push_back({{"input", input.string()},
                    {"output", target.filename().string()},
                    {"output_digest", file_digest(target)}});
    out << input.string() << " -> " << target.string() << "\n";
  }
  json m;
  m["tool"] = "maskfill";
  m["command"] = "direct-ensemble";
  m["strict"] = a.strict;
  m["config"] = config_json(map);
  m["seed"] = a.seed;
  m["weights_digest"] = file_digest(a.weights);
  m["images"] = rows;
  if (!a.strict)
    m["timings"] = {{"total_seconds", clock.seconds()}};
  write_manifest(a.manifest.empty() ? out_dir / "manifest.json" : fs::path(a.manifest), m);
  return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Zero-shot image denoising by masked reconstruction", "maskfill"};
  app.require_subcommand(1);

  DenoiseArgs dn;
  auto *denoise_cmd = app.add_subcommand("denoise", "Denoise images by per-image optimization");
  denoise_cmd->add_option("inputs", dn.inputs, "Image files or directories")->required();
  denoise_cmd->add_option("-o,--output", dn.output_dir, "Output directory")->required();
  add_config_flags(*denoise_cmd, dn);
  denoise_cmd->add_option("--reference", dn.reference_dir, "Directory of clean images for PSNR");
  denoise_cmd->add_option("--manifest", dn.manifest, "Manifest path (default OUTPUT/manifest.json)");
  denoise_cmd->add_option("--jobs", dn.jobs, "Images processed in parallel")->check(CLI::PositiveNumber);
  denoise_cmd->add_flag("--trace", dn.trace, "Write OUTPUT/<name>.trace.jsonl per image");
  denoise_cmd->add_flag("--strict", dn.strict, "Reproducible manifest without timings");

  std::string replay_manifest, replay_out;
  std::size_t replay_jobs = 1;
  auto *replay_cmd = app.add_subcommand("replay", "Re-run a denoise manifest and compare outputs");
  replay_cmd->add_option("manifest", replay_manifest, "Manifest written by denoise")->required();
  replay_cmd->add_option("-o,--output", replay_out, "Output directory")->required();
  replay_cmd->add_option("--jobs", replay_jobs, "Images processed in parallel")->check(CLI::PositiveNumber);

  PretrainArgs pt;
  auto *pretrain_cmd = app.add_subcommand("pretrain", "Masked-reconstruction pre-training");
  pretrain_cmd->add_option("--corpus", pt.corpus, "Directory of training images")->required();
  pretrain_cmd->add_option("-o,--output", pt.weights_out, "Weight file to write")->required();
  pretrain_cmd->add_option("--steps", pt.cfg.total_steps, "Optimization steps");
  pretrain_cmd->add_option("--batch", pt.cfg.batch_size, "Crops per step");
  pretrain_cmd->add_option("--crop", pt.cfg.crop_size, "Crop side length");
  pretrain_cmd->add_option("--lr", pt.cfg.lr0, "Initial learning rate");
  pretrain_cmd->add_option("--lr-min", pt.cfg.lr_min, "Final learning rate");
  pretrain_cmd->add_option("--mask-ratio", pt.cfg.mask_ratio, "Probability a pixel is hidden");
  pretrain_cmd->add_flag("--shared-channels", pt.cfg.shared_channels, "One mask for all channels");
  pretrain_cmd->add_option("--seed", pt.cfg.seed, "Random seed");
  pretrain_cmd->add_option("--channels", pt.cfg.model.in_channels, "Model channels (1 or 3)");
  pretrain_cmd->add_option("--depth", pt.cfg.model.depth, "Hourglass depth");
  pretrain_cmd->add_option("--base-channels", pt.cfg.model.base_channels, "Top-level width");
  pretrain_cmd->add_option("--max-channels", pt.cfg.model.max_channels, "Width cap");
  pretrain_cmd->add_option("--log", pt.log, "CSV log of step,lr,loss");
  pretrain_cmd->add_option("--report-every", pt.report_every, "Progress line interval (0 = quiet)");
  pretrain_cmd->add_option("--manifest", pt.manifest, "Manifest path (default OUTPUT.manifest.json)");
  pretrain_cmd->add_flag("--strict", pt.strict, "Reproducible manifest without timings");

  AddNoiseArgs an;
  auto *noise_cmd = app.add_subcommand("add-noise", "Synthesize noisy copies of images");
  noise_cmd->add_option("inputs", an.inputs, "Image files or directories")->required();
  noise_cmd->add_option("-o,--output", an.output_dir, "Output directory")->required();
  noise_cmd->add_option("--noise", an.noise, "Fixed model, e.g. gaussian:25/255, poisson:25");
  noise_cmd->add_option("--family", an.family, "Random level per image from a family's range");
  noise_cmd->add_option("--seed", an.seed, "Random seed");
  noise_cmd->add_option("--manifest", an.manifest, "Manifest path (default OUTPUT/manifest.json)");
  noise_cmd->add_flag("--float", an.float_output, "Write unclipped float maps (.pfm)");
  noise_cmd->add_flag("--strict", an.strict, "Reproducible manifest without timings");

  EvalArgs ev;
  auto *eval_cmd = app.add_subcommand("eval", "PSNR/SSIM of filename-matched image pairs");
  eval_cmd->add_option("clean", ev.clean_dir, "Directory of clean images")->required();
  eval_cmd->add_option("test", ev.test_dir, "Directory of noisy or denoised images")->required();
  eval_cmd->add_option("--csv", ev.csv, "Also write the report here");
  eval_cmd->add_option("--manifest", ev.manifest, "Manifest path (default CSV.manifest.json)");
  eval_cmd->add_flag("--quantize", ev.quantize, "Score after 8-bit quantization");

  DirectArgs de;
  auto *direct_cmd =
      app.add_subcommand("direct-ensemble", "Average masked predictions of fixed weights");
  direct_cmd->add_option("inputs", de.inputs, "Image files or directories")->required();
  direct_cmd->add_option("-o,--output", de.output_dir, "Output directory")->required();
  direct_cmd->add_option("--weights", de.weights, "Weight file")->required();
  direct_cmd->add_option("--samples", de.samples, "Number of random masks");
  direct_cmd->add_option("--mask-ratio", de.mask_ratio, "Probability a pixel is hidden");
  direct_cmd->add_flag("--shared-channels", de.shared_channels, "One mask for all channels");
  direct_cmd->add_option("--seed", de.seed, "Random seed");
  direct_cmd->add_option("--manifest", de.manifest, "Manifest path (default OUTPUT/manifest.json)");
  direct_cmd->add_flag("--strict", de.strict, "Reproducible manifest without timings");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*denoise_cmd)
      return cmd_denoise(dn, out);
    if (*replay_cmd)
      return cmd_replay(replay_manifest, replay_out, replay_jobs, out, err);
    if (*pretrain_cmd)
      return cmd_pretrain(pt, out);
    if (*noise_cmd)
      return cmd_add_noise(an, out);
    if (*eval_cmd)
      return cmd_eval(ev, out, err);
    if (*direct_cmd)
      return cmd_direct(de, out);
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractViolation &e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError &e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error &e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError &e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NoDataError &e) {
    err << "no data: " << e.what() << "\n";
    return kExitNoData;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

} // namespace maskfill
