#include <CLI11.hpp>

#include "symseg/config.hpp"
#include "symseg/continual.hpp"
#include "symseg/errors.hpp"
#include "symseg/gradsuite.hpp"
#include "symseg/metrics.hpp"
#include "symseg/network.hpp"
#include "symseg/report.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace symseg;

// exit codes shared with the operator docs
constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitGradcheck = 5;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::int64_t> seed;
  std::string out;
  std::string preset;
  std::string kd;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "key=value run configuration file");
  cmd->add_option("--set", opts.sets, "override a configuration key (key=value, repeatable)");
  cmd->add_option("--seed", opts.seed, "override the root seed");
  cmd->add_option("--out", opts.out, "override the output directory");
  cmd->add_option("--preset", opts.preset,
                  "override the schedule preset (offline or dash-separated step sizes)");
  cmd->add_option("--kd", opts.kd, "override the distillation variant")
      ->check(CLI::IsMember({"same", "img", "pcd", "cross", "none"}));
}

// file < --set < named flags
KeyValueConfig effective_kv(const CommonOpts& opts) {
  KeyValueConfig kv = opts.config_path.empty() ? KeyValueConfig{}
                                               : KeyValueConfig::parse_file(opts.config_path);
  for (const std::string& entry : opts.sets) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + entry + "'");
    }
    kv.set(entry.substr(0, eq), entry.substr(eq + 1));
  }
  if (opts.seed) kv.set("seed", std::to_string(*opts.seed));
  if (!opts.out.empty()) kv.set("out", opts.out);
  if (!opts.preset.empty()) kv.set("continual.preset", opts.preset);
  if (!opts.kd.empty()) kv.set("continual.kd", opts.kd);
  return kv;
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::string step_checkpoint_name(int step) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "checkpoint_step_%02d.ckpt", step);
  return buf;
}

int cmd_generate(const CommonOpts& opts) {
  const KeyValueConfig kv = effective_kv(opts);
  const RunConfig cfg = RunConfig::parse(kv);
  if (!cfg.dataset.synthetic) {
    throw ConfigError("generate-data renders synthetic scenes; set dataset.kind=synthetic");
  }
  const FrameSet data = cfg.load_frames();
  ensure_directory(cfg.out_dir);

  std::ostringstream list;
  int index = 0;
  const auto emit = [&](const ProjectedFrame& frame, const char* role) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "frame_%04d", index++);
    PointCloud cloud;
    for (Index pix = 0; pix < frame.height * frame.width; ++pix) {
      if (!frame.valid(pix)) continue;
      const Index row = pix / frame.width, col = pix % frame.width;
      cloud.points.emplace_back(frame.lidar(frame.plane(kPointX, row, col)),
                                frame.lidar(frame.plane(kPointY, row, col)),
                                frame.lidar(frame.plane(kPointZ, row, col)));
      cloud.reflectance.push_back(frame.lidar(frame.plane(kReflectance, row, col)));
      cloud.labels.push_back(frame.labels(pix));
    }
    const std::string scan = std::string(stem) + ".bin";
    const std::string label = std::string(stem) + ".label";
    const std::string image = std::string(stem) + ".ppm";
    write_scan(join(cfg.out_dir, scan), cloud);
    write_labels(join(cfg.out_dir, label), cloud.labels);
    write_ppm(join(cfg.out_dir, image), frame.color, frame.height, frame.width);
    list << role << ' ' << join(cfg.out_dir, scan) << ' ' << join(cfg.out_dir, label) << ' '
         << join(cfg.out_dir, image) << '\n';
  };
  for (const ProjectedFrame& frame : data.train) emit(frame, "train");
  for (const ProjectedFrame& frame : data.eval) emit(frame, "eval");
  write_text_file(join(cfg.out_dir, "frames.txt"), list.str());

  const ProjectionConfig cam = scene_camera(cfg.dataset.scene);
  nlohmann::json j;
  char digest_hex[20];
  std::snprintf(digest_hex, sizeof digest_hex, "%016llx",
                static_cast<unsigned long long>(cfg.digest));
  j["config_digest"] = digest_hex;
  j["seed"] = cfg.seed;
  j["frames"]["train"] = data.train.size();
  j["frames"]["eval"] = data.eval.size();
  j["camera"] = {{"fx", cam.fx},   {"fy", cam.fy},     {"cx", cam.cx},
                 {"cy", cam.cy},   {"near", cam.near_plane}, {"height", cam.height},
                 {"width", cam.width}};
  j["classes"] = cfg.dataset.scene.num_classes;
  write_text_file(join(cfg.out_dir, "manifest.json"), j.dump(2) + "\n");

  std::cout << "wrote " << index << " frames to " << cfg.out_dir << "\n";
  return kExitOk;
}

int cmd_train(const CommonOpts& opts) {
  const KeyValueConfig kv = effective_kv(opts);
  const RunConfig cfg = RunConfig::parse(kv);
  const FrameSet data = cfg.load_frames();
  ensure_directory(cfg.out_dir);

  TrainReport report;
  std::vector<std::pair<int, Model>> checkpoints;  // (step, model)
  if (cfg.plan.schedule.step_count() == 1) {
    auto [model, r] = run_offline(cfg.model, cfg.plan, data);
    report = std::move(r);
    checkpoints.emplace_back(0, std::move(model));
  } else {
    auto [models, r] = run_continual(cfg.model, cfg.plan, data);
    report = std::move(r);
    for (std::size_t k = 0; k < models.size(); ++k) {
      checkpoints.emplace_back(static_cast<int>(k), std::move(models[k]));
    }
  }
  report.config_digest = cfg.digest;

  for (const auto& [step, model] : checkpoints) {
    model.save_checkpoint(join(cfg.out_dir, step_checkpoint_name(step)), cfg.digest);
  }
  write_text_file(join(cfg.out_dir, "train_report.csv"), iou_rows_csv(report.iou_rows));
  write_text_file(join(cfg.out_dir, "loss_curves.csv"), loss_curves_csv(report.loss_curves));
  write_text_file(join(cfg.out_dir, "manifest.json"), run_manifest_json(cfg, kv));

  // per-branch mIoU of the last step, for the operator's eyes
  const int last = checkpoints.back().first;
  for (int branch = 0; branch < 2; ++branch) {
    double sum = 0.0;
    int defined = 0;
    for (const IouRow& row : report.iou_rows) {
      if (row.step == last && row.branch == branch && !std::isnan(row.iou)) {
        sum += row.iou;
        ++defined;
      }
    }
    std::cout << (branch == 0 ? "color" : "lidar") << " branch final mIoU: "
              << (defined > 0 ? format_double(sum / defined) : "undefined") << "\n";
  }
  std::fprintf(stderr, "wall clock: %.1fs\n", report.wall_clock_seconds);
  return kExitOk;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& checkpoint,
                 const std::string& modality, const std::string& predictor) {
  const KeyValueConfig kv = effective_kv(opts);
  const RunConfig cfg = RunConfig::parse(kv);
  const FrameSet data = cfg.load_frames();
  if (data.eval.empty()) throw ConfigError("evaluation needs at least one eval frame");
  ensure_directory(cfg.out_dir);

  if (predictor == "oracle") {
    // ground-truth pass-through: calibrates the metrics plumbing end to end
    ConfusionMatrix cm(cfg.plan.schedule.total_classes);
    for (const ProjectedFrame& frame : data.eval) cm.accumulate(frame.labels, frame);
    const IouReport r = iou(cm);
    write_text_file(join(cfg.out_dir, "evaluation.csv"), per_class_csv(r));
    std::cout << "oracle mIoU: " << format_double(r.miou) << "\n";
    return kExitOk;
  }

  if (checkpoint.empty()) throw ConfigError("evaluate needs --checkpoint (or --predictor oracle)");
  ModelConfig narrow = cfg.model;
  narrow.color.num_classes = 2;
  narrow.lidar.num_classes = 2;
  Model model(narrow);  // widened automatically to the stored classifier
  model.load_checkpoint(checkpoint, cfg.digest);

  // the model only knows the classes its classifier was trained for
  std::vector<int> known;
  for (int c = 1; c <= model.num_classes(); ++c) known.push_back(c);

  if (modality.empty()) {
    std::vector<ProjectedFrame> masked;
    masked.reserve(data.eval.size());
    for (const ProjectedFrame& frame : data.eval) masked.push_back(mask_labels(frame, known));
    const ModalityTable table = modality_table(model, masked);
    write_text_file(join(cfg.out_dir, "modality_table.csv"), modality_table_csv(table));
    std::cout << "branch averages: color " << format_double(table.branch_average[0]) << ", lidar "
              << format_double(table.branch_average[1]) << "\n";
    return kExitOk;
  }

  const ModalityAvailability avail{modality != "lidar", modality != "rgb"};
  std::ostringstream out;
  out << "branch,class,iou\n";
  for (int branch = 0; branch < 2; ++branch) {
    ConfusionMatrix cm(model.num_classes());
    for (const ProjectedFrame& frame : data.eval) {
      const ProjectedFrame masked = mask_labels(frame, known);
      const Model::ForwardResult fwd = model.forward(masked, avail);
      cm.accumulate(argmax_ids(branch == 0 ? fwd.color_probs : fwd.lidar_probs), masked);
    }
    const IouReport r = iou(cm);
    const char* name = branch == 0 ? "color" : "lidar";
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
      out << name << ',' << (c + 1) << ',' << format_double(r.per_class[c]) << '\n';
    }
    out << name << ",mean," << format_double(r.miou) << '\n';
    std::cout << name << " branch mIoU (" << modality << "): " << format_double(r.miou) << "\n";
  }
  write_text_file(join(cfg.out_dir, "evaluation.csv"), out.str());
  return kExitOk;
}

int cmd_gradcheck(const CommonOpts& opts) {
  const KeyValueConfig kv = effective_kv(opts);
  const RunConfig cfg = RunConfig::parse(kv);
  ensure_directory(cfg.out_dir);
  const double threshold = 1e-4;

  const std::vector<GradCheckEntry> entries = run_gradient_suite(cfg.seed);
  std::ostringstream csv;
  csv << "component,max_rel_error,threshold,status\n";
  bool all_ok = true;
  for (const GradCheckEntry& entry : entries) {
    const bool ok = entry.max_rel_error < threshold;
    all_ok = all_ok && ok;
    csv << entry.component << ',' << format_double(entry.max_rel_error) << ','
        << format_double(threshold) << ',' << (ok ? "pass" : "FAIL") << '\n';
    std::cout << (ok ? "pass" : "FAIL") << "  " << entry.component << "  "
              << format_double(entry.max_rel_error) << "\n";
  }
  write_text_file(join(cfg.out_dir, "gradcheck.csv"), csv.str());
  std::cout << (all_ok ? "gradient check passed" : "gradient check FAILED") << "\n";
  return all_ok ? kExitOk : kExitGradcheck;
}

int cmd_report(const CommonOpts& opts) {
  const KeyValueConfig kv = effective_kv(opts);
  const RunConfig cfg = RunConfig::parse(kv);
  const std::string text = read_text_file(join(cfg.out_dir, "train_report.csv"));

  // per-(step, branch) mIoU over defined classes
  std::map<std::pair<int, int>, std::pair<double, int>> cells;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string step_s, branch_s, class_s, iou_s;
    if (!std::getline(fields, step_s, ',') || !std::getline(fields, branch_s, ',') ||
        !std::getline(fields, class_s, ',') || !std::getline(fields, iou_s, ',')) {
      throw DataError("train_report.csv: malformed row '" + line + "'");
    }
    if (iou_s == "nan") continue;
    const int step = std::stoi(step_s);
    const int branch = branch_s == "color" ? 0 : 1;
    auto& cell = cells[{step, branch}];
    cell.first += std::stod(iou_s);
    cell.second += 1;
  }

  std::ostringstream csv;
  csv << "step,branch,miou,defined_classes\n";
  for (const auto& [key, cell] : cells) {
    const double miou = cell.second > 0 ? cell.first / cell.second
                                        : std::numeric_limits<double>::quiet_NaN();
    csv << key.first << ',' << (key.second == 0 ? "color" : "lidar") << ','
        << format_double(miou) << ',' << cell.second << '\n';
    std::cout << "step " << key.first << " " << (key.second == 0 ? "color" : "lidar")
              << " mIoU " << format_double(miou) << " over " << cell.second << " classes\n";
  }
  write_text_file(join(cfg.out_dir, "summary.csv"), csv.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"symmetric two-branch color+LiDAR segmentation workbench"};
  app.require_subcommand(1);

  CommonOpts gen_opts, train_opts, eval_opts, grad_opts, report_opts;
  CLI::App* gen = app.add_subcommand("generate-data", "render synthetic frames to disk");
  add_common(gen, gen_opts);
  CLI::App* train = app.add_subcommand("train", "run offline or class-incremental training");
  add_common(train, train_opts);
  CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the eval frames");
  add_common(evaluate, eval_opts);
  std::string checkpoint, modality, predictor = "model";
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file to evaluate");
  evaluate->add_option("--modality", modality,
                       "evaluate one availability setting instead of the full table")
      ->check(CLI::IsMember({"both", "rgb", "lidar"}));
  evaluate->add_option("--predictor", predictor, "model (default) or ground-truth oracle")
      ->check(CLI::IsMember({"model", "oracle"}));
  CLI::App* grad = app.add_subcommand("gradcheck", "verify gradients against finite differences");
  add_common(grad, grad_opts);
  CLI::App* report = app.add_subcommand("report", "summarize a finished run's report files");
  add_common(report, report_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_opts);
    if (train->parsed()) return cmd_train(train_opts);
    if (evaluate->parsed()) return cmd_evaluate(eval_opts, checkpoint, modality, predictor);
    if (grad->parsed()) return cmd_gradcheck(grad_opts);
    if (report->parsed()) return cmd_report(report_opts);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInternal;
  }
  return kExitInternal;
}
