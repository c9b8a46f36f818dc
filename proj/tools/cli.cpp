#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <optional>
#include <sstream>

#include "light4gs/codec/compressor.hpp"
#include "light4gs/codec/container.hpp"
#include "light4gs/errors.hpp"
#include "light4gs/io/bytes.hpp"
#include "light4gs/mhcm/model.hpp"
#include "light4gs/scene/io.hpp"
#include "light4gs/scene/toy.hpp"
#include "light4gs/stp/significance.hpp"
#include "light4gs/trainer/config.hpp"
#include "light4gs/trainer/rd.hpp"
#include "light4gs/trainer/trainer.hpp"

namespace l4gs::cli {

namespace {

/// Raised when a command ran fine but its check did not hold.
struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class FileKind { kScene, kContainer, kUnknown };

FileKind kind_of(const io::Bytes& bytes) {
  auto starts = [&](const char* magic) {
    const std::size_t n = std::strlen(magic);
    return bytes.size() >= n && std::equal(magic, magic + n, bytes.begin(),
                                           [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; });
  };
  if (starts(codec::kContainerMagic)) return FileKind::kContainer;
  if (starts(scene::kSceneMagic)) return FileKind::kScene;
  return FileKind::kUnknown;
}

/// Scene file as is, or the decoded scene of a container.
scene::SceneBundle load_any_scene(const std::string& path, std::size_t* file_bytes = nullptr) {
  const auto bytes = io::read_file(path);
  if (file_bytes) *file_bytes = bytes.size();
  switch (kind_of(bytes)) {
    case FileKind::kScene:
      return scene::parse_scene(bytes);
    case FileKind::kContainer:
      return codec::decompress(bytes).scene;
    default:
      throw FormatError(path + ": neither a scene file nor a container");
  }
}

std::vector<double> parse_reals(const std::string& flag, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !std::isfinite(v))
      throw ConfigError(flag + ": cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(flag + ": empty list");
  return out;
}

struct Common {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string config;
  std::vector<std::string> overrides;

  void add_to(CLI::App* cmd, bool with_config) {
    cmd->add_option("--seed", seed, "seed for every random draw")->capture_default_str();
    cmd->add_option("--threads", threads, "worker cap")->capture_default_str()->check(CLI::PositiveNumber);
    if (with_config) {
      cmd->add_option("--config", config, "key=value training config file")->check(CLI::ExistingFile);
      cmd->add_option("--set", overrides, "key=value override, repeatable");
    }
  }

  /// File values, then --set, then --seed/--threads.
  trainer::TrainConfig train_config() const {
    trainer::TrainConfig cfg;
    if (!config.empty()) cfg = trainer::load_config(config);
    for (const auto& kv : overrides) cfg = trainer::parse_config(kv, cfg);
    cfg.seed = seed;
    cfg.threads = threads;
    cfg.validate();
    return cfg;
  }
};

io::Bytes text_bytes(const std::string& s) { return io::Bytes(s.begin(), s.end()); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(precision) << v;
  return o.str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Light4GS codec for deformable Gaussian scenes", "light4gs"};
  app.require_subcommand(1);

  // gen-scene
  auto* gen = app.add_subcommand("gen-scene", "write a procedural toy scene");
  scene::ToyConfig toy;
  std::string gen_out;
  gen->add_option("-o,--output", gen_out, "scene file")->required();
  gen->add_option("--primitives", toy.primitives)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--timestamps", toy.timestamps)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--views", toy.views)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--image-size", toy.image_size)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--channels", toy.channels)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--base-res", toy.base_res)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--base-cols", toy.base_cols, "0 = same as --base-res")->capture_default_str();
  gen->add_option("--scales", toy.scales)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--hidden", toy.hidden)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--sh-k", toy.sh_k)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--faint-fraction", toy.faint_fraction)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  Common gen_common;
  gen_common.add_to(gen, false);

  // train
  auto* tr = app.add_subcommand("train", "fit a model to renders of a target scene");
  std::string tr_target, tr_out, tr_init, tr_models, tr_log;
  tr->add_option("target", tr_target, "scene whose renders are the training images")->required();
  tr->add_option("-o,--output", tr_out, "trained scene file")->required();
  auto* tr_init_opt = tr->add_option("--init", tr_init, "starting scene");
  tr->add_option("--models", tr_models, "write the trained entropy models here");
  tr->add_option("--log", tr_log, "training log CSV");
  bool tr_no_perturb = false;
  tr->add_flag("--from-target", tr_no_perturb, "start from the target itself")->excludes(tr_init_opt);
  Common tr_common;
  tr_common.add_to(tr, true);

  // compress
  auto* cp = app.add_subcommand("compress", "scene file to container");
  std::string cp_in, cp_out, cp_models;
  cp->add_option("scene", cp_in)->required();
  cp->add_option("-o,--output", cp_out, "container file")->required();
  cp->add_option("--models", cp_models, "entropy models from train; default: calibrated random models");
  Common cp_common;
  cp_common.add_to(cp, false);

  // decompress
  auto* dc = app.add_subcommand("decompress", "container to scene file");
  std::string dc_in, dc_out;
  dc->add_option("container", dc_in)->required();
  dc->add_option("-o,--output", dc_out, "scene file")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "render PSNR and size ratio of a candidate against a reference");
  std::string ev_ref, ev_cand;
  std::optional<double> ev_min;
  bool ev_held_out = false;
  ev->add_option("reference", ev_ref, "reference scene file")->required();
  ev->add_option("candidate", ev_cand, "scene file or container")->required();
  ev->add_option("--min-psnr", ev_min, "exit 3 when PSNR falls below this");
  ev->add_flag("--held-out", ev_held_out, "render between the training timestamps");

  // rd-sweep
  auto* rd = app.add_subcommand("rd-sweep", "train and code over a lambda x prune-ratio grid");
  std::string rd_target, rd_out, rd_init, rd_lambdas, rd_ratios;
  rd->add_option("target", rd_target)->required();
  rd->add_option("-o,--output", rd_out, "RD points CSV")->required();
  rd->add_option("--init", rd_init, "starting scene; default: perturbed target");
  rd->add_option("--lambdas", rd_lambdas, "comma list; default 5e-2,1e-2,5e-3,1e-3,5e-4");
  rd->add_option("--ratios", rd_ratios, "comma list; default 0,0.2,0.4,0.6");
  Common rd_common;
  rd_common.add_to(rd, true);

  // stats
  auto* st = app.add_subcommand("stats", "section breakdown of a container, or significance report of a scene");
  std::string st_in, st_csv;
  double st_ratio = 0.0;
  st->add_option("file", st_in)->required();
  st->add_option("--csv", st_csv, "also write the report as CSV");
  st->add_option("--prune-ratio", st_ratio, "scenes only: ratio for the kept/pruned counts")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  Common st_common;
  st_common.add_to(st, false);

  // bitrate-map
  auto* bm = app.add_subcommand("bitrate-map", "per-position bits of every coded plane");
  std::string bm_in, bm_out;
  bm->add_option("container", bm_in)->required();
  bm->add_option("-o,--output", bm_out, "CSV: scale,plane,channel,row,col,bits")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "light4gs: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      toy.seed = gen_common.seed;
      const auto s = scene::generate_toy_scene(toy);
      scene::save_scene(gen_out, s);
      out << "wrote " << gen_out << ": " << s.primitives.size() << " primitives, " << s.timestamps
          << " timestamps, " << s.cameras.size() << " views, " << scene::raw_scene_bytes(s) << " bytes\n";
    } else if (tr->parsed()) {
      const auto cfg = tr_common.train_config();
      const auto target = scene::load_scene(tr_target);
      scene::SceneBundle init;
      if (!tr_init.empty())
        init = scene::load_scene(tr_init);
      else if (tr_no_perturb)
        init = target;
      else
        init = scene::perturb_scene(target, {}, cfg.seed);
      const auto targets = trainer::training_targets(target);
      std::vector<trainer::LogRow> progress;
      try {
        auto res = trainer::train(cfg, init, targets, &progress);
        scene::save_scene(tr_out, res.scene);
        if (!tr_models.empty()) codec::save_models(tr_models, res.models);
        if (!tr_log.empty()) io::write_file(tr_log, text_bytes(trainer::log_csv(res.log)));
        out << "trained " << cfg.iterations << " iterations: " << res.scene.primitives.size()
            << " primitives, PSNR " << fmt(trainer::render_psnr(res.scene, targets)) << " dB\n";
      } catch (const TrainingError&) {
        if (!tr_log.empty()) io::write_file(tr_log, text_bytes(trainer::log_csv(progress)));
        throw;
      }
    } else if (cp->parsed()) {
      const auto s = scene::load_scene(cp_in);
      codec::CodecModels models = cp_models.empty()
                                      ? codec::default_models(s, {.seed = cp_common.seed})
                                      : codec::load_models(cp_models);
      const auto res = codec::compress(s, models);
      io::write_file(cp_out, res.container);
      const auto raw = scene::raw_scene_bytes(s);
      out << "wrote " << cp_out << ": " << res.container.size() << " bytes (" << fmt(double(raw) / res.container.size(), 2)
          << "x vs " << raw << " raw), hexplane " << res.hexplane_stream_bytes << " bytes vs estimate "
          << fmt(res.hexplane_estimate_bits / 8.0, 1) << "\n";
    } else if (dc->parsed()) {
      const auto res = codec::decompress(io::read_file(dc_in));
      scene::save_scene(dc_out, res.scene);
      out << "wrote " << dc_out << ": " << res.scene.primitives.size() << " primitives\n";
    } else if (ev->parsed()) {
      const auto ref = scene::load_scene(ev_ref);
      std::size_t cand_bytes = 0;
      const auto cand = load_any_scene(ev_cand, &cand_bytes);
      const auto targets = ev_held_out ? trainer::render_targets(ref, scene::held_out_times(ref))
                                       : trainer::training_targets(ref);
      const double psnr = trainer::render_psnr(cand, targets);
      const auto raw = scene::raw_scene_bytes(ref);
      out << "psnr_db=" << fmt(psnr) << " reference_bytes=" << raw << " candidate_bytes=" << cand_bytes
          << " ratio=" << fmt(double(raw) / cand_bytes, 3) << "\n";
      if (ev_min && !(psnr >= *ev_min))
        throw VerificationFailure("PSNR " + fmt(psnr) + " dB is below --min-psnr " + fmt(*ev_min));
    } else if (rd->parsed()) {
      const auto cfg = rd_common.train_config();
      const auto target = scene::load_scene(rd_target);
      const auto init = rd_init.empty() ? scene::perturb_scene(target, {}, cfg.seed) : scene::load_scene(rd_init);
      const auto lambdas = rd_lambdas.empty() ? trainer::kLambdaGrid : parse_reals("--lambdas", rd_lambdas);
      const auto ratios = rd_ratios.empty() ? trainer::kPruneRatioGrid : parse_reals("--ratios", rd_ratios);
      if (lambdas.size() * ratios.size() < 2) throw ConfigError("rd-sweep needs at least two configurations");
      const auto points = trainer::rd_sweep(cfg, lambdas, ratios, init, trainer::training_targets(target),
                                            trainer::render_targets(target, scene::held_out_times(target)));
      const auto hull = trainer::rd_hull(points);
      io::write_file(rd_out, text_bytes(trainer::rd_csv(points, hull)));
      out << "wrote " << rd_out << ": " << points.size() << " points, " << hull.size() << " on the hull\n";
    } else if (st->parsed()) {
      const auto bytes = io::read_file(st_in);
      switch (kind_of(bytes)) {
        case FileKind::kContainer: {
          const auto stats = codec::container_stats(bytes);
          out << codec::stats_table(stats);
          if (!st_csv.empty()) io::write_file(st_csv, text_bytes(codec::stats_csv(stats)));
          break;
        }
        case FileKind::kScene: {
          const auto s = scene::parse_scene(bytes);
          const auto table = stp::score(s, st_common.threads);
          const auto pruned = stp::prune(table.score, st_ratio);
          out << stp::report_histogram(table, pruned.removed);
          if (!st_csv.empty()) io::write_file(st_csv, text_bytes(stp::report_csv(table, pruned.removed)));
          break;
        }
        default:
          throw FormatError(st_in + ": neither a scene file nor a container");
      }
    } else if (bm->parsed()) {
      auto res = codec::decompress(io::read_file(bm_in));
      const auto& hex = res.scene.hexplane;
      const auto maps = mhcm::bitrate_map(res.models.context, hex, res.models.steps);
      std::ostringstream csv;
      csv << "scale,plane,channel,row,col,bits\n";
      csv.precision(9);
      for (std::size_t s = 0; s < maps.size(); ++s)
        for (int p = 0; p < scene::kNumPlanes; ++p) {
          const auto& m = maps[s][p];
          const std::size_t ch = m.dim(0), h = m.dim(1), w = m.dim(2);
          double total = 0.0;
          for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t i = 0; i < h; ++i)
              for (std::size_t j = 0; j < w; ++j) {
                const double b = m[(c * h + i) * w + j];
                total += b;
                csv << s << ',' << scene::kPlaneNames[p] << ',' << c << ',' << i << ',' << j << ',' << b << '\n';
              }
          out << "scale " << s << " plane " << scene::kPlaneNames[p] << ": " << fmt(total, 1) << " bits\n";
        }
      io::write_file(bm_out, text_bytes(csv.str()));
    }
    return kExitOk;
  } catch (const VerificationFailure& e) {
    err << "light4gs: verification failed: " << e.what() << '\n';
    return kExitVerification;
  } catch (const FormatError& e) {
    err << "light4gs: format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const std::exception& e) {
    err << "light4gs: error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace l4gs::cli
