// Batch command-line front end: skeletons, channel expansion, synthetic data,
// training, generation, evaluation and comparison grids.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sgce/container.hpp"
#include "sgce/data.hpp"
#include "sgce/error.hpp"
#include "sgce/expand.hpp"
#include "sgce/gradsuite.hpp"
#include "sgce/image.hpp"
#include "sgce/losses.hpp"
#include "sgce/metrics.hpp"
#include "sgce/skeleton.hpp"
#include "sgce/trainer.hpp"

namespace fs = std::filesystem;
using namespace sgce;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

/// Raised for flag combinations CLI11 cannot express; maps to exit 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Config file: `key<TAB>value` lines, keys are long flag names without "--".
// Values only fill flags that were not given on the command line.

std::vector<std::string> merge_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  auto it = std::find(args.begin(), args.end(), "--config");
  if (it == args.end()) return args;
  if (std::next(it) == args.end()) throw UsageError("--config needs a file path");
  const fs::path path = *std::next(it);
  args.erase(it, it + 2);

  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::UnreadableFile, "cannot read config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": expected key<TAB>value");
    }
    const std::string flag = "--" + line.substr(0, tab);
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (given) continue;  // flag wins
    args.push_back(flag);
    args.push_back(line.substr(tab + 1));
  }
  return args;
}

std::vector<fs::path> list_pngs(const fs::path& where) {
  if (fs::is_regular_file(where)) return {where};
  if (!fs::is_directory(where)) throw Error(ErrorKind::UnreadableFile, "no such file or directory: " + where.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(where))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorKind::DataEmpty, "no PNG files in " + where.string());
  return files;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  return out;
}

Direction parse_direction(const std::string& s) { return s == "y2x" ? Direction::YtoX : Direction::XtoY; }

// ---------------------------------------------------------------------------
// Options shared by train / eval / diversity when they read a dataset.

struct DataArgs {
  std::string root;
  std::string manifest;
  std::string font_x = kSynthFontA;
  std::string font_y = kSynthFontB;

  void add(CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("--data", root, "dataset root (font directories + manifest)");
    if (required) opt->required();
    cmd->add_option("--manifest", manifest, "manifest path (default <data>/manifest.tsv)");
    cmd->add_option("--font-x", font_x, "source font label")->capture_default_str();
    cmd->add_option("--font-y", font_y, "target font label")->capture_default_str();
  }

  GlyphDataset load(int size) const {
    const fs::path m = manifest.empty() ? fs::path(root) / kManifestName : fs::path(manifest);
    return load_dataset(Manifest::load(m), root, font_x, font_y, size);
  }
};

// ---------------------------------------------------------------------------

struct TrainArgs {
  DataArgs data;
  std::string out;
  std::string log;
  std::string resume;
  std::uint64_t seed = 0;
  TrainConfig cfg;
  int image_size = ModelSpec::desk().image_size;
  int base_width = ModelSpec::desk().base_width;
  int res_blocks = ModelSpec::desk().n_residual_blocks;
  bool paper_scale = false;
  std::string gan_loss = "nonsat";
  std::string ske_grad = "masked-intensity";
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* max_steps_opt = nullptr;
  CLI::Option* every_opt = nullptr;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "train the two generator / discriminator pairs");
  a.data.add(cmd, true);
  cmd->add_option("--out", a.out, "checkpoint to write")->required();
  cmd->add_option("--seed", a.seed, "seed for initialisation and shuffling")->required();
  cmd->add_option("--log", a.log, "CSV loss log (appended when resuming)");
  cmd->add_option("--resume", a.resume, "continue from this checkpoint");
  a.epochs_opt = cmd->add_option("--epochs", a.cfg.epochs)->capture_default_str();
  cmd->add_option("--batch-size", a.cfg.batch_size)->capture_default_str();
  cmd->add_option("--lr", a.cfg.learning_rate)->capture_default_str();
  cmd->add_option("--beta1", a.cfg.beta1)->capture_default_str();
  cmd->add_option("--beta2", a.cfg.beta2)->capture_default_str();
  cmd->add_option("--lambda-cyc", a.cfg.weights.cyc)->capture_default_str();
  cmd->add_option("--lambda-ske", a.cfg.weights.ske)->capture_default_str();
  cmd->add_option("--threshold", a.cfg.threshold)->capture_default_str();
  cmd->add_option("--sgce-enabled", a.cfg.sgce_enabled, "false trains plain CycleGAN")->capture_default_str();
  a.every_opt = cmd->add_option("--checkpoint-every", a.cfg.checkpoint_every, "0 = only at the end")
                    ->capture_default_str();
  a.max_steps_opt = cmd->add_option("--max-steps", a.cfg.max_steps, "0 = no cap")->capture_default_str();
  cmd->add_option("--gan-loss", a.gan_loss)->check(CLI::IsMember({"nonsat", "minimax"}))->capture_default_str();
  cmd->add_option("--ske-grad", a.ske_grad)
      ->check(CLI::IsMember({"masked-intensity", "none"}))
      ->capture_default_str();
  cmd->add_option("--image-size", a.image_size)->capture_default_str();
  cmd->add_option("--base-width", a.base_width)->capture_default_str();
  cmd->add_option("--res-blocks", a.res_blocks)->capture_default_str();
  cmd->add_option("--paper-scale", a.paper_scale, "128px, width 64, nine residual blocks")->capture_default_str();
}

int run_train(TrainArgs& a) {
  std::optional<TrainingState> state;
  if (!a.resume.empty()) {
    state.emplace(from_checkpoint(load_container(a.resume)));
    if (state->config.seed != a.seed) {
      throw UsageError("--seed " + std::to_string(a.seed) + " does not match the checkpoint seed " +
                       std::to_string(state->config.seed));
    }
    if (a.epochs_opt->count() > 0) state->config.epochs = a.cfg.epochs;
    if (a.max_steps_opt->count() > 0) state->config.max_steps = a.cfg.max_steps;
    if (a.every_opt->count() > 0) state->config.checkpoint_every = a.cfg.checkpoint_every;
  } else {
    TrainConfig cfg = a.cfg;
    cfg.seed = a.seed;
    cfg.gan_loss = a.gan_loss == "minimax" ? GanLoss::Minimax : GanLoss::NonSaturating;
    cfg.ske_grad = a.ske_grad == "none" ? SkeGrad::None : SkeGrad::MaskedIntensity;
    if (a.paper_scale) {
      cfg.model = ModelSpec::paper();
    } else {
      cfg.model.image_size = a.image_size;
      cfg.model.base_width = a.base_width;
      cfg.model.n_residual_blocks = a.res_blocks;
    }
    state.emplace(cfg);
  }
  const GlyphDataset data = a.data.load(state->config.model.image_size);
  TrainOptions options;
  options.log_path = a.log;
  options.checkpoint_path = a.out;
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  train(*state, data, options);
  std::cout << "trained to step " << state->step << ", checkpoint " << a.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PairArgs {
  DataArgs data;
  std::string generated;
  std::string reference;
  std::string checkpoint;
  std::string direction = "x2y";
};

void add_pair_sources(CLI::App* cmd, PairArgs& a) {
  cmd->add_option("--generated", a.generated, "directory of generated PNGs");
  cmd->add_option("--reference", a.reference, "directory of reference PNGs (matched by file name)");
  cmd->add_option("--checkpoint", a.checkpoint, "generate from the test split instead of --generated");
  a.data.add(cmd, false);
  cmd->add_option("--direction", a.direction)->check(CLI::IsMember({"x2y", "y2x"}))->capture_default_str();
}

struct ImagePairs {
  std::vector<RasterImage> generated, reference;
};

ImagePairs collect_pairs(const PairArgs& a) {
  ImagePairs p;
  if (!a.checkpoint.empty()) {
    if (a.data.root.empty()) throw UsageError("--checkpoint needs --data");
    TrainingState state = from_checkpoint(load_container(a.checkpoint));
    const GlyphDataset d = a.data.load(state.config.model.image_size);
    const Direction dir = parse_direction(a.direction);
    const auto& src = dir == Direction::XtoY ? d.x_test : d.y_test;
    const auto& src_names = dir == Direction::XtoY ? d.x_test_names : d.y_test_names;
    const auto& ref = dir == Direction::XtoY ? d.y_test : d.x_test;
    const auto& ref_names = dir == Direction::XtoY ? d.y_test_names : d.x_test_names;
    std::map<std::string, std::size_t> ref_index;
    for (std::size_t i = 0; i < ref_names.size(); ++i) ref_index[ref_names[i]] = i;
    std::vector<RasterImage> inputs;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto hit = ref_index.find(src_names[i]);
      if (hit == ref_index.end()) continue;
      inputs.push_back(src[i]);
      p.reference.push_back(ref[hit->second]);
    }
    if (inputs.empty()) throw Error(ErrorKind::DataEmpty, "no test glyphs shared by both fonts");
    p.generated = generate(state, inputs, dir);
    return p;
  }
  if (a.generated.empty() || a.reference.empty()) {
    throw UsageError("give --generated and --reference, or --checkpoint with --data");
  }
  for (const auto& g : list_pngs(a.generated)) {
    const fs::path r = fs::path(a.reference) / g.filename();
    if (!fs::exists(r)) throw Error(ErrorKind::UnreadableFile, "no reference for " + g.filename().string());
    p.generated.push_back(read_png(g));
    p.reference.push_back(read_png(r));
  }
  return p;
}

struct EvalArgs {
  PairArgs pairs;
  std::string task;
  std::string out;
  std::string features_generated = "flatten-gray-16";
  std::string features_reference = "flatten-gray-16";
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* cmd = app.add_subcommand("eval", "MSE / PSNR / SSIM / FID as CSV");
  add_pair_sources(cmd, a.pairs);
  cmd->add_option("--task", a.task, "task label for the CSV row (default <font-x>2<font-y> or 'dir')");
  cmd->add_option("--out", a.out, "CSV file (default stdout)");
  cmd->add_option("--features-generated", a.features_generated, "flatten-gray-16 or file:<path>")
      ->capture_default_str();
  cmd->add_option("--features-reference", a.features_reference, "flatten-gray-16 or file:<path>")
      ->capture_default_str();
}

int run_eval(const EvalArgs& a) {
  const ImagePairs p = collect_pairs(a.pairs);
  std::string task = a.task;
  if (task.empty()) {
    task = a.pairs.checkpoint.empty() ? "dir"
           : a.pairs.direction == "x2y" ? a.pairs.data.font_x + "2" + a.pairs.data.font_y
                                        : a.pairs.data.font_y + "2" + a.pairs.data.font_x;
  }
  const MetricReport r = evaluate(task, p.generated, p.reference, parse_extractor(a.features_generated),
                                  parse_extractor(a.features_reference));
  std::ostringstream csv;
  csv << kMetricCsvHeader << '\n' << metric_csv_row(r) << '\n';
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    open_output(a.out) << csv.str();
  }
  return kExitOk;
}

int run_diversity(const PairArgs& a) {
  const ImagePairs p = collect_pairs(a);
  const DiversityReport r = diversity_diagnostic(p.generated, p.reference);
  std::cout << "score,ratio,generated_mean_distance,real_mean_distance,duplicate_clusters\n"
            << format_double(r.score) << ',' << format_double(r.ratio) << ','
            << format_double(r.generated_mean_distance) << ',' << format_double(r.real_mean_distance) << ','
            << r.duplicate_clusters.size() << '\n';
  for (const auto& cluster : r.duplicate_clusters) {
    std::cout << "cluster";
    for (std::size_t i : cluster) std::cout << ' ' << i;
    std::cout << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run_grid(const std::string& rows_path, const std::string& out, int cell, int gap) {
  std::ifstream in(rows_path);
  if (!in) throw Error(ErrorKind::UnreadableFile, "cannot read " + rows_path);
  const fs::path base = fs::path(rows_path).parent_path();
  std::vector<std::vector<RasterImage>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<RasterImage> row;
    std::istringstream fields(line);
    std::string field;
    while (std::getline(fields, field, '\t')) {
      if (field.empty()) continue;
      const fs::path p = fs::path(field).is_absolute() ? fs::path(field) : base / field;
      RasterImage img = read_png(p);
      if (cell == 0) cell = img.width();
      row.push_back(resize(img, cell, cell));
    }
    rows.push_back(std::move(row));
  }
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  if (rows.empty() || cols == 0) throw Error(ErrorKind::DataEmpty, "grid rows file lists no images");

  const int width = static_cast<int>(cols) * (cell + gap) + gap;
  const int height = static_cast<int>(rows.size()) * (cell + gap) + gap;
  RasterImage canvas(width, height, 3, 0.5);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const int ox = gap + static_cast<int>(c) * (cell + gap);
      const int oy = gap + static_cast<int>(r) * (cell + gap);
      for (int y = 0; y < cell; ++y)
        for (int x = 0; x < cell; ++x)
          for (int k = 0; k < 3; ++k) canvas.at(ox + x, oy + y, k) = rows[r][c].at(x, y, k);
    }
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_png(out, canvas);
  return kExitOk;
}

int run_gradcheck(std::uint64_t seed, std::size_t configs, const std::string& op) {
  const auto results = run_gradient_suite(seed, configs, op);
  if (results.empty()) throw UsageError("--op " + op + " is not a checked operator");
  bool ok = true;
  std::cout << "op,configs,max_rel_error,status\n";
  for (const auto& r : results) {
    const bool pass = r.max_error < kGradTolerance;
    ok = ok && pass;
    std::cout << r.op << ',' << r.configs << ',' << format_double(r.max_error) << ','
              << (pass ? "ok" : "FAIL") << '\n';
  }
  return ok ? kExitOk : kExitNumerical;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::InvalidSpec:
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidThreshold:
      return kExitUsage;
    default:
      return e.is_numerical() ? kExitNumerical : kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skeleton-guided font translation toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");
  app.add_option("--config", "tab-separated key/value defaults for the subcommand's flags");

  std::string in, out;
  double threshold = kDefaultThreshold;

  auto* skel = app.add_subcommand("skeletonize", "binarise and thin a glyph image");
  skel->add_option("--in", in, "input PNG")->required();
  skel->add_option("--out", out, "skeleton PNG (ink black)")->required();
  skel->add_option("--threshold", threshold, "ink where gray < threshold")->capture_default_str();

  auto* exp = app.add_subcommand("expand", "write the 4-channel model input as a container");
  exp->add_option("--in", in, "input PNG")->required();
  exp->add_option("--out", out, "container file (tensor 'input', [4,H,W] in [-1,1])")->required();
  exp->add_option("--threshold", threshold)->capture_default_str();

  std::size_t n = 100;
  int size = 32;
  std::uint64_t seed = 0;
  auto* synth = app.add_subcommand("synth", "write the synthetic two-font dataset");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--n", n, "glyphs per font")->capture_default_str();
  synth->add_option("--size", size, "glyph size in pixels")->capture_default_str();
  synth->add_option("--seed", seed)->required();

  TrainArgs train_args;
  add_train(app, train_args);

  std::string checkpoint, direction = "x2y";
  auto* gen = app.add_subcommand("generate", "translate glyphs with a trained checkpoint");
  gen->add_option("--checkpoint", checkpoint)->required();
  gen->add_option("--in", in, "PNG file or directory")->required();
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--direction", direction)->check(CLI::IsMember({"x2y", "y2x"}))->capture_default_str();

  EvalArgs eval_args;
  add_eval(app, eval_args);

  PairArgs div_args;
  auto* div = app.add_subcommand("diversity", "mode-collapse diagnostic of generated glyphs");
  add_pair_sources(div, div_args);

  std::size_t configs = 50;
  std::string op;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  grad->add_option("--seed", seed)->required();
  grad->add_option("--configs", configs, "random configurations per op")->capture_default_str();
  grad->add_option("--op", op, "check a single op");

  std::string rows;
  int cell = 0, gap = 2;
  auto* grid = app.add_subcommand("grid", "tile images into a comparison figure");
  grid->add_option("--rows", rows, "file of tab-separated image paths, one figure row per line")->required();
  grid->add_option("--out", out, "output PNG")->required();
  grid->add_option("--cell", cell, "cell size in pixels (default: first image width)");
  grid->add_option("--gap", gap, "separator width")->capture_default_str();

  try {
    std::vector<std::string> args = merge_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }

  try {
    if (*skel) {
      const RasterImage img = read_png(in);
      write_png(out, grid_to_image(ske(img, threshold)));
      return kExitOk;
    }
    if (*exp) {
      const Tensor t = to_model_input(expand(read_png(in), threshold));
      Container c;
      c.add(ContainerEntry::from_tensor("input", t));
      save_container(out, c);
      return kExitOk;
    }
    if (*synth) {
      const Manifest m = synth_fonts(out, n, size, seed);
      std::cout << "wrote " << m.entries.size() << " glyphs to " << out << '\n';
      return kExitOk;
    }
    if (app.got_subcommand("train")) return run_train(train_args);
    if (*gen) {
      TrainingState state = from_checkpoint(load_container(checkpoint));
      const auto files = list_pngs(in);
      std::vector<RasterImage> images;
      for (const auto& f : files) images.push_back(read_png(f));
      const auto outputs = generate(state, images, parse_direction(direction));
      fs::create_directories(out);
      for (std::size_t i = 0; i < files.size(); ++i) write_png(fs::path(out) / files[i].filename(), outputs[i]);
      return kExitOk;
    }
    if (app.got_subcommand("eval")) return run_eval(eval_args);
    if (*div) return run_diversity(div_args);
    if (*grad) return run_gradcheck(seed, configs, op);
    if (*grid) return run_grid(rows, out, cell, gap);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
