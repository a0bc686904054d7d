#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "seedsplat/io.hpp"
#include "seedsplat/losses.hpp"
#include "seedsplat/synthetic.hpp"
#include "seedsplat/trainer.hpp"

namespace fs = std::filesystem;
using namespace seedsplat;

namespace {

std::string time_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", t);
  return buf;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Applies a flat key=value config file: every key is a long option of the
// chosen subcommand without the leading dashes, and flags given on the
// command line always win. Values are injected as extra arguments before
// parsing, so validation and help stay in one place.
void apply_config_file(CLI::App& app, std::vector<std::string>& args) {
  std::string path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return;

  CLI::App* sub = nullptr;
  for (const std::string& a : args) {
    if (a.empty() || a[0] == '-') continue;
    for (CLI::App* candidate : app.get_subcommands({}))
      if (candidate->get_name() == a) sub = candidate;
    break;
  }
  if (!sub) return;  // the parser reports the missing subcommand itself

  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    size_t eq = line.find('=');
    std::string where = path + ":" + std::to_string(lineno);
    if (eq == std::string::npos)
      throw CLI::ValidationError("--config", "malformed line (expected key=value) at " + where);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "config")
      throw CLI::ValidationError("--config", "config files cannot nest at " + where);
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt)
      throw CLI::ValidationError("--config", "unknown key '" + key + "' at " + where);

    bool given = false;
    for (const std::string& a : args)
      if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) given = true;
    if (given) continue;

    if (opt->get_expected_max() == 0) {  // flag
      std::string v = value;
      for (char& c : v) c = static_cast<char>(std::tolower(c));
      if (v == "1" || v == "true" || v == "yes" || v == "on")
        args.push_back("--" + key);
      else if (!(v == "0" || v == "false" || v == "no" || v == "off"))
        throw CLI::ValidationError("--config",
                                   "flag '" + key + "' needs a boolean at " + where);
    } else {
      if (value.empty())
        throw CLI::ValidationError("--config", "key '" + key + "' has no value at " + where);
      args.push_back("--" + key);
      std::istringstream vs(value);
      std::string token;
      while (vs >> token) args.push_back(token);
    }
  }
}

std::string available_cameras(const std::vector<Camera>& cams) {
  std::string out;
  for (size_t i = 0; i < cams.size(); ++i) {
    if (i) out += ", ";
    out += cams[i].id;
  }
  return out;
}

void add_train_options(CLI::App* sub, TrainConfig* cfg, std::vector<double>* background) {
  sub->add_option("--iterations", cfg->iterations, "Optimization steps")->capture_default_str();
  sub->add_option("--seed", cfg->rng_seed, "RNG seed")->capture_default_str();
  sub->add_option("--lambda-ssim", cfg->lambda_ssim, "SSIM loss weight")->capture_default_str();
  sub->add_option("--lambda-v", cfg->lambda_volume, "Volume regularizer weight")
      ->capture_default_str();
  sub->add_option("--k", cfg->k, "Gaussians decoded per seed")->capture_default_str();
  sub->add_option("--feature-dim", cfg->feature_dim, "Static/dynamic feature length")
      ->capture_default_str();
  sub->add_option("--hidden-dim", cfg->hidden_dim, "MLP hidden width")->capture_default_str();
  sub->add_option("--tau-alpha", cfg->tau_alpha, "Opacity deactivation threshold")
      ->capture_default_str();
  sub->add_option("--init-frames", cfg->init_frames, "Per-frame clouds fused at initialization")
      ->capture_default_str();
  sub->add_option("--lr-features", cfg->lr_features, "Static feature learning rate")
      ->capture_default_str();
  sub->add_option("--lr-scales", cfg->lr_scales, "Seed scale learning rate")
      ->capture_default_str();
  sub->add_option("--lr-hash", cfg->lr_hash, "Hash table learning rate")->capture_default_str();
  sub->add_option("--lr-mlp", cfg->lr_mlp, "Initial MLP learning rate")->capture_default_str();
  sub->add_option("--lr-mlp-final", cfg->lr_mlp_final, "Final MLP learning rate")
      ->capture_default_str();
  sub->add_option("--tau-grow", cfg->tau_grow, "Seed growing gradient threshold")
      ->capture_default_str();
  sub->add_option("--asg-interval", cfg->asg_interval, "Iterations between growth events")
      ->capture_default_str();
  sub->add_option("--asg-start", cfg->asg_start, "First growth iteration")
      ->capture_default_str();
  sub->add_option("--asg-end", cfg->asg_end, "Last growth iteration")->capture_default_str();
  sub->add_option("--hash-levels", cfg->hash.levels, "Hash encoding levels")
      ->capture_default_str();
  sub->add_option("--hash-features", cfg->hash.features_per_entry, "Features per hash entry")
      ->capture_default_str();
  sub->add_option("--hash-table-size", cfg->hash.table_size,
                  "Hash table entries per level (power of two)")
      ->capture_default_str();
  sub->add_option("--hash-base-res", cfg->hash.base_resolution, "Coarsest spatial resolution")
      ->capture_default_str();
  sub->add_option("--hash-max-res", cfg->hash.max_resolution, "Finest spatial resolution")
      ->capture_default_str();
  sub->add_option("--hash-time-base-res", cfg->hash.time_base_resolution,
                  "Coarsest time resolution")
      ->capture_default_str();
  sub->add_option("--hash-time-max-res", cfg->hash.time_max_resolution,
                  "Finest time resolution (clamped to the frame grid)")
      ->capture_default_str();
  sub->add_flag("--no-static", cfg->no_static, "Ablation: drop the static feature from fusion");
  sub->add_flag("--no-deactivation", cfg->no_deactivation,
                "Ablation: keep low-opacity gaussians active");
  sub->add_flag("--no-asg", cfg->no_asg, "Ablation: disable seed growing");
  sub->add_option("--background", *background, "Background RGB")->expected(3);
  sub->add_option("--progress-interval", cfg->progress_interval,
                  "Progress line cadence (0 silences progress)")
      ->capture_default_str();
}

int run_train(const std::string& data, const std::string& out_dir, TrainConfig cfg,
              const std::vector<double>& background) {
  cfg.background = Vec3(background[0], background[1], background[2]);
  FrameDataset dataset = load_dataset(data);
  TrainOutput result = train(dataset, cfg, &std::cerr);

  fs::create_directories(out_dir);
  std::string ckpt_path = (fs::path(out_dir) / "checkpoint.ldgs").string();
  save_checkpoint(ckpt_path, result.model);

  std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw DataError("cannot write metrics: " + metrics_path);
  metrics << format_metrics(result.metrics);
  metrics.close();

  std::cout << "trained " << cfg.iterations << " iterations, " << result.model.seeds.count()
            << " seeds (" << result.grown_seeds << " grown)\n";
  if (result.skipped_updates > 0)
    std::cerr << "warning: " << result.skipped_updates
              << " parameter updates skipped due to non-finite gradients\n";
  if (!dataset.camera_indices("test").empty()) {
    std::vector<EvalRow> rows =
        evaluate_model(result.model, dataset, "test", RasterizeConfig{}, cfg.background);
    double mp = 0, ms = 0;
    for (const EvalRow& r : rows) {
      mp += r.psnr;
      ms += r.ssim;
    }
    std::printf("test split: mean psnr %.4f, mean ssim %.4f over %zu views\n",
                mp / rows.size(), ms / rows.size(), rows.size());
  }
  std::cout << "checkpoint: " << ckpt_path << "\nmetrics: " << metrics_path << "\n";
  return 0;
}

int run_render(const std::string& ckpt_path, const std::string& cameras_path,
               const std::string& camera_id, const std::string& out_dir,
               const std::vector<double>& times, bool keep_inactive,
               const std::vector<double>& background) {
  Checkpoint model = load_checkpoint(ckpt_path);
  std::vector<Camera> cams = read_cameras_json(cameras_path);
  const Camera* cam = nullptr;
  for (const Camera& c : cams)
    if (c.id == camera_id) cam = &c;
  if (!cam)
    throw DataError("unknown camera '" + camera_id +
                    "'; available: " + available_cameras(cams));

  fs::create_directories(out_dir);
  Vec3 bg(background[0], background[1], background[2]);
  for (double t : times) {
    if (t < 0.0 || t > model.bounds.frame_count - 1)
      std::cerr << "warning: time " << t << " is outside the captured range [0, "
                << model.bounds.frame_count - 1 << "]; extrapolating\n";
    Image img = render_model(model, *cam, t, RasterizeConfig{}, bg, keep_inactive);
    std::string path =
        (fs::path(out_dir) / (camera_id + "_t" + time_label(t) + ".png")).string();
    write_png(path, img);
    std::cout << path << "\n";
  }
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data, const std::string& split,
             const std::string& out_dir, bool save_images,
             const std::vector<double>& background) {
  Checkpoint model = load_checkpoint(ckpt_path);
  FrameDataset dataset = load_dataset(data);
  if (dataset.camera_indices(split).empty())
    throw DataError("no cameras in split '" + split + "'");
  Vec3 bg(background[0], background[1], background[2]);

  std::vector<EvalRow> rows = evaluate_model(model, dataset, split, RasterizeConfig{}, bg);

  fs::create_directories(out_dir);
  std::string csv_path = (fs::path(out_dir) / "eval.csv").string();
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw DataError("cannot write report: " + csv_path);
  csv << "frame,cam,psnr,ssim\n";
  double mp = 0, ms = 0;
  for (const EvalRow& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.6f\n", r.frame, r.cam.c_str(), r.psnr, r.ssim);
    csv << buf;
    std::cout << buf;
    mp += r.psnr;
    ms += r.ssim;
  }
  csv.close();
  std::printf("mean psnr %.6f, mean ssim %.6f over %zu views\n", mp / rows.size(),
              ms / rows.size(), rows.size());

  if (save_images)
    for (int ci : dataset.camera_indices(split)) {
      const Camera& cam = dataset.cameras[ci];
      for (int f = 0; f < dataset.frame_count; ++f) {
        Image img = render_model(model, cam, f, RasterizeConfig{}, bg, false);
        write_png((fs::path(out_dir) / (cam.id + "_t" + time_label(f) + ".png")).string(), img);
      }
    }
  return 0;
}

int run_inspect(const std::string& ckpt_path, bool show_echo) {
  Checkpoint model = load_checkpoint(ckpt_path);
  const SceneBounds& b = model.bounds;
  std::printf("checkpoint: %s\n", ckpt_path.c_str());
  std::printf("bounds: min (%g, %g, %g) max (%g, %g, %g), %d frames\n", b.aabb_min.x(),
              b.aabb_min.y(), b.aabb_min.z(), b.aabb_max.x(), b.aabb_max.y(), b.aabb_max.z(),
              b.frame_count);
  int active = 0;
  for (int i = 0; i < model.seeds.count(); ++i) active += model.seeds.active[i] ? 1 : 0;
  std::printf("seeds: %d (%d active), feature dim %d, k %d\n", model.seeds.count(), active,
              model.seeds.feature_dim, model.stack.config.k);
  const HashFieldConfig& h = model.stack.hash.config();
  std::printf("hash: %d levels x %u entries x %d features, space %u..%u, time %u..%u\n",
              h.levels, h.table_size, h.features_per_entry, h.base_resolution, h.max_resolution,
              h.time_base_resolution, h.time_max_resolution);
  const Mlp* mlps[7] = {&model.stack.phi, &model.stack.f_w, &model.stack.f_mu, &model.stack.f_o,
                        &model.stack.f_q, &model.stack.f_s, &model.stack.f_c};
  const char* names[7] = {"phi", "f_w", "f_mu", "f_o", "f_q", "f_s", "f_c"};
  for (int m = 0; m < 7; ++m) {
    std::printf("%-4s: %d", names[m], mlps[m]->input_dim());
    for (const DenseLayer& l : mlps[m]->layers) std::printf(" -> %d", l.out);
    std::printf(" (%zu parameters)\n", mlps[m]->parameter_count());
  }
  if (show_echo) std::printf("--- config echo ---\n%s", model.config_echo.c_str());
  return 0;
}

int run_synth(const SyntheticConfig& cfg, const std::string& out_dir) {
  gen_synthetic(cfg, out_dir);
  std::printf("wrote %d cameras x %d frames at %dx%d under %s\n", cfg.camera_count,
              cfg.frame_count, cfg.width, cfg.height, out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seed-based dynamic gaussian splatting"};
  app.require_subcommand(1);
  int rc = 0;

  // train
  auto* train_cmd = app.add_subcommand("train", "Optimize a model on a capture");
  std::string train_data, train_out;
  TrainConfig train_cfg;
  std::vector<double> train_bg{0.0, 0.0, 0.0};
  train_cmd->add_option("--data", train_data, "Dataset root")->required();
  train_cmd->add_option("--out", train_out, "Output directory")->required();
  add_train_options(train_cmd, &train_cfg, &train_bg);
  std::string train_config_file;
  train_cmd->add_option("--config", train_config_file,
                        "key=value file; command-line flags take precedence");
  train_cmd->callback([&] { rc = run_train(train_data, train_out, train_cfg, train_bg); });

  // render
  auto* render_cmd = app.add_subcommand("render", "Render a checkpoint");
  std::string render_ckpt, render_cams, render_data, render_cam_id, render_out, render_range;
  double render_time = 0.0;
  bool keep_inactive = false;
  std::vector<double> render_bg{0.0, 0.0, 0.0};
  render_cmd->add_option("--checkpoint", render_ckpt, "Checkpoint file")->required();
  render_cmd->add_option("--cameras", render_cams, "cameras.json path");
  render_cmd->add_option("--data", render_data, "Dataset root (uses its cameras.json)");
  render_cmd->add_option("--camera", render_cam_id, "Camera id")->required();
  render_cmd->add_option("--out", render_out, "Output directory")->required();
  auto* time_opt = render_cmd->add_option("--time", render_time, "Frame time, fractional allowed")
                       ->capture_default_str();
  render_cmd->add_option("--time-range", render_range, "Inclusive integer range a:b")
      ->excludes(time_opt);
  render_cmd->add_flag("--keep-inactive", keep_inactive,
                       "Render gaussians below the opacity threshold too");
  render_cmd->add_option("--background", render_bg, "Background RGB")->expected(3);
  std::string render_config_file;
  render_cmd->add_option("--config", render_config_file,
                         "key=value file; command-line flags take precedence");
  render_cmd->callback([&] {
    if (render_cams.empty() && render_data.empty())
      throw CLI::ValidationError("render", "either --cameras or --data is required");
    std::string cams_path =
        render_cams.empty() ? (fs::path(render_data) / "cameras.json").string() : render_cams;
    std::vector<double> times;
    if (!render_range.empty()) {
      long a = 0, b = 0;
      char extra;
      if (std::sscanf(render_range.c_str(), "%ld:%ld%c", &a, &b, &extra) != 2 || a > b)
        throw CLI::ValidationError("--time-range", "expected a:b with a <= b");
      for (long t = a; t <= b; ++t) times.push_back(static_cast<double>(t));
    } else {
      times.push_back(render_time);
    }
    rc = run_render(render_ckpt, cams_path, render_cam_id, render_out, times, keep_inactive,
                    render_bg);
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint against a capture");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_out;
  bool save_images = false;
  std::vector<double> eval_bg{0.0, 0.0, 0.0};
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset root")->required();
  eval_cmd->add_option("--split", eval_split, "Camera split to score")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Output directory")->required();
  eval_cmd->add_flag("--save-images", save_images, "Also write the rendered views");
  eval_cmd->add_option("--background", eval_bg, "Background RGB")->expected(3);
  std::string eval_config_file;
  eval_cmd->add_option("--config", eval_config_file,
                       "key=value file; command-line flags take precedence");
  eval_cmd->callback(
      [&] { rc = run_eval(eval_ckpt, eval_data, eval_split, eval_out, save_images, eval_bg); });

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate the ray-traced test capture");
  SyntheticConfig synth_cfg;
  std::string synth_out;
  bool synth_static = false;
  synth_cmd->add_option("--out", synth_out, "Dataset root to write")->required();
  synth_cmd->add_option("--width", synth_cfg.width, "Image width")->capture_default_str();
  synth_cmd->add_option("--height", synth_cfg.height, "Image height")->capture_default_str();
  synth_cmd->add_option("--focal", synth_cfg.focal, "Focal length in pixels")
      ->capture_default_str();
  synth_cmd->add_option("--cameras", synth_cfg.camera_count, "Ring camera count")
      ->capture_default_str();
  synth_cmd->add_option("--test-cameras", synth_cfg.test_cameras, "Cameras held out as test")
      ->capture_default_str();
  synth_cmd->add_option("--ring-radius", synth_cfg.ring_radius, "Camera ring radius")
      ->capture_default_str();
  synth_cmd->add_option("--ring-height", synth_cfg.ring_height, "Camera ring height")
      ->capture_default_str();
  synth_cmd->add_option("--frames", synth_cfg.frame_count, "Frame count")
      ->capture_default_str();
  synth_cmd->add_option("--sphere-radius", synth_cfg.sphere_radius, "Background sphere radius")
      ->capture_default_str();
  synth_cmd->add_flag("--static", synth_static, "Omit the moving quad");
  synth_cmd->add_option("--quad-half", synth_cfg.quad_half, "Quad half edge length")
      ->capture_default_str();
  synth_cmd->add_option("--quad-travel", synth_cfg.quad_travel, "Quad center travel along x")
      ->capture_default_str();
  synth_cmd->add_option("--sphere-points", synth_cfg.sphere_points,
                        "Sphere surface samples per frame")
      ->capture_default_str();
  synth_cmd->add_option("--quad-points", synth_cfg.quad_points, "Quad surface samples per frame")
      ->capture_default_str();
  synth_cmd->add_option("--coverage", synth_cfg.point_coverage,
                        "Fraction of the motion covered by quad points")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_cfg.rng_seed, "RNG seed")->capture_default_str();
  std::string synth_config_file;
  synth_cmd->add_option("--config", synth_config_file,
                        "key=value file; command-line flags take precedence");
  synth_cmd->callback([&] {
    synth_cfg.with_quad = !synth_static;
    rc = run_synth(synth_cfg, synth_out);
  });

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "Describe a checkpoint");
  std::string inspect_ckpt;
  bool show_echo = false;
  inspect_cmd->add_option("--checkpoint", inspect_ckpt, "Checkpoint file")->required();
  inspect_cmd->add_flag("--echo", show_echo, "Print the embedded config dump");
  std::string inspect_config_file;
  inspect_cmd->add_option("--config", inspect_config_file,
                          "key=value file; command-line flags take precedence");
  inspect_cmd->callback([&] { rc = run_inspect(inspect_ckpt, show_echo); });

  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  try {
    apply_config_file(app, args);
    std::reverse(args.begin(), args.end());  // parse(vector) consumes back-to-front
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  }
  return rc;
}
