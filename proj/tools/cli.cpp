#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "bigr/bundle.hpp"
#include "bigr/errors.hpp"
#include "bigr/toy_data.hpp"
#include "bigr/zeroshot.hpp"

namespace bigr::cli {

namespace fs = std::filesystem;

namespace {

// Flags that map one-to-one onto config keys. Values stay as text until
// Config::set validates them, so type errors read the same from files and flags.
struct Bindings {
  struct Entry {
    const CLI::App* app;
    CLI::Option* option;
    std::string key;
  };
  std::vector<Entry> options;
  std::map<std::string, std::string> values;

  void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    options.push_back({app, app->add_option(flag, values[key], help), key});
  }
  void bind_flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto* opt = app->add_flag_callback(flag, [this, key]() { values[key] = "true"; }, help);
    options.push_back({app, opt, key});
  }
  void apply(const CLI::App* app, Config& config) const {
    for (const auto& e : options) {
      if (e.app == app && e.option->count() > 0) config.set(e.key, values.at(e.key));
    }
  }
};

struct Common {
  std::string home;
  std::string config_file;
  std::vector<std::string> sets;
};

fs::path home_dir(const Common& c) {
  if (!c.home.empty()) return c.home;
  if (const char* env = std::getenv("BIGR_HOME"); env != nullptr && *env != '\0') return env;
  return "bigr_home";
}

// defaults < base (e.g. checkpoint) < --config file < --set < command flags
Config resolve_config(const Common& common, const Bindings& bindings, const CLI::App* app,
                      const Config* base = nullptr) {
  Config config = base ? *base : Config();
  if (!common.config_file.empty()) config.merge_text(read_file(common.config_file), common.config_file);
  for (const auto& s : common.sets) {
    const auto eq = s.find('=');
    require(eq != std::string::npos, ErrorKind::Parse, "--set expects key=value, got \"" + s + "\"");
    config.set(s.substr(0, eq), s.substr(eq + 1));
  }
  bindings.apply(app, config);
  return config;
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  require(!ec, ErrorKind::Load, "cannot create directory " + p.string() + ": " + ec.message());
}

Dataset load_split(const std::string& flag, const fs::path& fallback, Split split) {
  const fs::path p = flag.empty() ? fallback : fs::path(flag);
  if (!fs::exists(p)) {
    fail(ErrorKind::Load, "dataset " + p.string() + " not found (run `bigr make-dataset` or pass a path)");
  }
  return load_dataset(p, split);
}

void metric(std::ostream& out, const std::string& key, double value) {
  out << key << " = " << std::setprecision(6) << value << "\n";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput:
    case ErrorKind::UnsupportedWidth:
    case ErrorKind::Parse: return 2;
    case ErrorKind::Load:
    case ErrorKind::CheckpointIncompatible: return 3;
    case ErrorKind::NumericFailure:
    case ErrorKind::TrainingFailure: return 4;
    case ErrorKind::Internal: return 5;
  }
  return 1;
}

void save_images(const std::vector<Image>& images, const fs::path& dir, const std::string& stem, bool grid,
                 std::ostream& out) {
  ensure_dir(dir);
  if (grid) {
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(images.size()))));
    const fs::path p = dir / (stem + "_grid.ppm");
    write_pnm(p, tile_images(images, cols));
    out << "wrote " << p.string() << "\n";
    return;
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    const fs::path p = dir / (stem + "_" + std::to_string(i) + ".ppm");
    write_pnm(p, images[i]);
    out << "wrote " << p.string() << "\n";
  }
}

Image load_image(const std::string& path) {
  require(!path.empty(), ErrorKind::InvalidInput, "--image is required");
  if (!fs::exists(path)) fail(ErrorKind::Load, "image " + path + " not found");
  Image im = read_pnm(path);
  return im;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Binary-latent masked image generation: tokenizer, masked transformer, Bernoulli transcoder", "bigr"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  Common common;
  app.add_option("--home", common.home, "Artifact directory (default: $BIGR_HOME or ./bigr_home)");
  app.add_option("--config", common.config_file, "Config file of key = value lines")->check(CLI::ExistingFile);
  app.add_option("--set", common.sets, "Override any config key, key=value (repeatable)")
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  Bindings b;

  // make-dataset
  auto* mk = app.add_subcommand("make-dataset", "Render the procedural toy dataset (train and val splits)");
  b.bind(mk, "--train-count", "train_count", "Training images");
  b.bind(mk, "--val-count", "val_count", "Held-out images");
  b.bind(mk, "--size", "image_size", "Image side in pixels");
  b.bind(mk, "--seed", "data_seed", "Dataset seed");

  // train-tokenizer
  auto* tt = app.add_subcommand("train-tokenizer", "Train the binary autoencoder by MSE reconstruction");
  std::string tt_data, tt_val;
  tt->add_option("--data", tt_data, "Training dataset (default: <home>/train.bgrd)");
  tt->add_option("--val", tt_val, "Held-out dataset (default: <home>/val.bgrd)");
  b.bind(tt, "--epochs", "tok_epochs", "Training epochs");
  b.bind(tt, "--lr", "tok_lr", "Learning rate");
  b.bind(tt, "--batch", "tok_batch_size", "Batch size");
  b.bind(tt, "--bits", "code_bits", "Bits per token K");
  b.bind(tt, "--seed", "seed", "Seed");

  // train
  auto* tr = app.add_subcommand("train", "Train the masked transformer and transcoder on tokenized data");
  std::string tr_data;
  tr->add_option("--data", tr_data, "Training dataset (default: <home>/train.bgrd)");
  b.bind(tr, "--epochs", "epochs", "Training epochs");
  b.bind(tr, "--lr", "lr", "Learning rate");
  b.bind(tr, "--batch", "batch_size", "Batch size");
  b.bind(tr, "--target", "target", "Transcoder target: residual, z0 or direct");
  b.bind(tr, "--layers", "layers", "Transformer layers");
  b.bind(tr, "--dim", "dim", "Embedding width");
  b.bind(tr, "--timesteps", "timesteps", "Training diffusion steps T");
  b.bind(tr, "--cond-dropout", "cond_dropout", "Condition dropout rate");
  b.bind_flag(tr, "--unconditional", "unconditional", "Replace every class token by the unconditional token");
  b.bind(tr, "--seed", "seed", "Seed");

  // sampling flags shared by sample / infill / interpolate / enrich
  auto sampler_flags = [&](CLI::App* s) {
    b.bind(s, "--cfg", "cfg_scale", "Classifier-free guidance scale");
    b.bind(s, "--temp", "temperature", "Gumbel temperature");
    b.bind(s, "--iters", "iterations", "Unmasking iterations N");
    b.bind(s, "--steps", "inference_steps", "Denoising steps");
    b.bind(s, "--order", "order", "Unmask order: entropy, random or raster");
    b.bind(s, "--confidence", "confidence", "Confidence: surrogate or entropy");
    b.bind_flag(s, "--deterministic", "deterministic", "Threshold bits at 0.5 instead of sampling");
    b.bind(s, "--seed", "seed", "Seed");
  };
  std::string out_dir;
  bool grid = false;

  auto* sm = app.add_subcommand("sample", "Generate images for a class");
  int sm_class = 0;
  int sm_count = 1;
  bool sm_uncond = false;
  std::string sm_trace;
  sm->add_option("--class", sm_class, "Class id");
  sm->add_flag("--uncond", sm_uncond, "Use the unconditional token");
  sm->add_option("--count", sm_count, "Number of samples (sample i uses seed + i)")->check(CLI::PositiveNumber);
  sm->add_option("--trace", sm_trace, "Write the per-iteration unmask trace (JSON lines) to this path");
  sm->add_option("--out", out_dir, "Output directory (default: <home>/samples)");
  sm->add_flag("--grid", grid, "Tile all samples into one image");
  sampler_flags(sm);

  auto* pb = app.add_subcommand("probe", "Fit a linear probe on pooled backbone features");
  std::string pb_data, pb_val, pb_features;
  pb->add_option("--data", pb_data, "Training dataset (default: <home>/train.bgrd)");
  pb->add_option("--val", pb_val, "Held-out dataset (default: <home>/val.bgrd)");
  pb->add_option("--features", pb_features, "Also export held-out features to this path");
  b.bind(pb, "--layer", "feature_layer", "Backbone layer (1-based; 0 = middle)");

  auto* in = app.add_subcommand("infill", "Regenerate a token region of an image (inpaint, outpaint, edit)");
  std::string in_image, in_region;
  int in_class = -1;
  bool in_uncond = false;
  in->add_option("--image", in_image, "Input PPM/PGM image")->required();
  in->add_option("--region", in_region, "Region mask text file (token grid of 0/1)")->required();
  auto* in_class_opt = in->add_option("--class", in_class, "Edit toward this class");
  in->add_flag("--uncond", in_uncond, "Inpaint / outpaint with the unconditional token")->excludes(in_class_opt);
  in->add_option("--out", out_dir, "Output directory (default: <home>/samples)");
  sampler_flags(in);

  auto* ip = app.add_subcommand("interpolate", "Generate from a blend of two class embeddings");
  int ip_a = 0, ip_b = 0;
  double ip_lambda = 0.5;
  ip->add_option("--class-a", ip_a, "First class")->required();
  ip->add_option("--class-b", ip_b, "Second class")->required();
  ip->add_option("--lambda", ip_lambda, "Blend weight of the second class, in [0, 1]");
  ip->add_option("--out", out_dir, "Output directory (default: <home>/samples)");
  sampler_flags(ip);

  auto* en = app.add_subcommand("enrich", "Re-synthesize a half-resolution image at full resolution");
  std::string en_image;
  en->add_option("--image", en_image, "Half-resolution input PPM/PGM image")->required();
  en->add_option("--out", out_dir, "Output directory (default: <home>/samples)");
  sampler_flags(en);

  auto* ev = app.add_subcommand("eval", "Report reconstruction PSNR, probe accuracy and sample statistics");
  std::string ev_data, ev_val;
  int ev_per_class = 4;
  ev->add_option("--data", ev_data, "Training dataset (default: <home>/train.bgrd)");
  ev->add_option("--val", ev_val, "Held-out dataset (default: <home>/val.bgrd)");
  ev->add_option("--per-class", ev_per_class, "Samples generated per class")->check(CLI::PositiveNumber);
  sampler_flags(ev);

  std::vector<std::string> args(raw_args.rbegin(), raw_args.rend());
  if (!args.empty()) args.pop_back();  // program name
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    const std::string msg = er.str();
    if (!msg.empty()) err << msg.substr(0, msg.find('\n')) << "\n";
    return code;
  }

  try {
    const fs::path home = home_dir(common);
    const auto default_out = [&]() { return out_dir.empty() ? home / "samples" : fs::path(out_dir); };

    if (mk->parsed()) {
      const Config config = resolve_config(common, b, mk);
      ensure_dir(home);
      const int size = config.integer("image_size");
      const auto seed = static_cast<std::uint64_t>(config.integer("data_seed"));
      const int classes = config.integer("num_classes");
      Dataset train = make_toy_dataset({config.integer("train_count"), size, classes, seed});
      Dataset val = make_toy_dataset({config.integer("val_count"), size, classes, derive_seed(seed, 0x56414C)});
      val.split = Split::Val;
      save_dataset(train, home / "train.bgrd");
      save_dataset(val, home / "val.bgrd");
      out << "wrote " << (home / "train.bgrd").string() << " (" << train.size() << " images)\n";
      out << "wrote " << (home / "val.bgrd").string() << " (" << val.size() << " images)\n";
      return 0;
    }

    if (tt->parsed()) {
      const Config config = resolve_config(common, b, tt);
      const TokenizerConfig tc = tokenizer_config(config);
      const TokenizerTrainConfig train_cfg = tokenizer_train_config(config);
      const Dataset train = load_split(tt_data, home / "train.bgrd", Split::Train);
      const Dataset val = load_split(tt_val, home / "val.bgrd", Split::Val);
      Tokenizer<float> tok(tc, train_cfg.seed);
      const auto report = train_tokenizer(tok, train, val, train_cfg, [&](const TokenizerEpochStats& s) {
        out << "epoch " << s.epoch << " train_mse " << s.train_loss << " val_mse " << s.val_loss << " val_psnr "
            << s.val_psnr << "\n";
        out.flush();
      });
      ensure_dir(home);
      save_checkpoint(make_checkpoint(tok, config), tokenizer_path(home));
      metric(out, "initial_val_mse", report.initial_val_loss);
      if (!report.epochs.empty()) metric(out, "val_psnr", report.epochs.back().val_psnr);
      out << "wrote " << tokenizer_path(home).string() << "\n";
      return 0;
    }

    if (tr->parsed()) {
      Config tok_config;
      auto tok = tokenizer_from_checkpoint(load_checkpoint(tokenizer_path(home), Component::Tokenizer), &tok_config);
      Config config = resolve_config(common, b, tr, &tok_config);
      const ModelConfig mc = model_config(config);
      const TrainConfig train_cfg = train_config(config);
      const Dataset train = load_split(tr_data, home / "train.bgrd", Split::Train);
      require(train.num_classes == mc.backbone.num_classes, ErrorKind::InvalidInput,
              "dataset has " + std::to_string(train.num_classes) + " classes but num_classes is " +
                  std::to_string(mc.backbone.num_classes));
      const auto codes = encode_all(*tok, train.images);
      GenerativeModel<float> model(mc, train_cfg.seed);
      const auto report = train_model(model, codes, train.labels, train_cfg, [&](const EpochStats& s) {
        out << "epoch " << s.epoch << " train_loss " << s.train_loss << " monitor_loss " << s.monitor_loss << "\n";
        out.flush();
      });
      save_checkpoint(make_checkpoint(model, config), model_path(home));
      metric(out, "initial_loss", report.initial_loss);
      metric(out, "reference_loss", report.reference_loss);
      if (!report.epochs.empty()) {
        metric(out, "final_loss", report.epochs.back().monitor_loss);
        metric(out, "relative_drop", 1.0 - report.epochs.back().monitor_loss / report.initial_loss);
      }
      out << "wrote " << model_path(home).string() << "\n";
      return 0;
    }

    // Everything below needs a trained bundle.
    ModelBundle bundle = load_bundle(home);
    const auto& model = *bundle.model;
    const auto& tok = *bundle.tokenizer;

    if (sm->parsed()) {
      const Config config = resolve_config(common, b, sm, &bundle.config);
      const SamplerConfig sc = sampler_config(config);
      const int cls = sm_uncond ? model.uncond_id() : sm_class;
      require(cls >= 0 && cls <= model.uncond_id(), ErrorKind::InvalidInput,
              "--class must be in [0, " + std::to_string(model.config().backbone.num_classes) + ")");
      std::vector<Image> images;
      std::string traces;
      for (int i = 0; i < sm_count; ++i) {
        Rng rng(sc.seed + static_cast<std::uint64_t>(i));
        GenerateRequest request;
        request.class_id = cls;
        const SampleResult r = generate(model, request, sc, rng);
        require(r.grid.valid(), ErrorKind::Internal, "sampler produced an invalid grid");
        images.push_back(tok.decode(r.grid));
        traces += r.trace.to_jsonl();
      }
      const std::string stem = sm_uncond ? "uncond" : "class" + std::to_string(cls);
      save_images(images, default_out(), stem, grid, out);
      if (!sm_trace.empty()) {
        write_file_atomic(sm_trace, traces);
        out << "wrote " << sm_trace << "\n";
      }
      return 0;
    }

    if (pb->parsed()) {
      const Config config = resolve_config(common, b, pb, &bundle.config);
      const int layer = config.integer("feature_layer") > 0 ? config.integer("feature_layer")
                                                              : model.config().backbone.probe_layer();
      const Dataset train = load_split(pb_data, home / "train.bgrd", Split::Train);
      const Dataset val = load_split(pb_val, home / "val.bgrd", Split::Val);
      const auto fx = extract_features(model, encode_all(tok, train.images), layer);
      const auto fv = extract_features(model, encode_all(tok, val.images), layer);
      const ProbeResult r = fit_linear_probe(fx, train.labels, fv, val.labels, train.num_classes, probe_config(config));
      metric(out, "layer", layer);
      metric(out, "top1", r.top1);
      if (r.has_top5) metric(out, "top5", r.top5);
      metric(out, "chance", 1.0 / train.num_classes);
      if (!pb_features.empty()) {
        FeatureTable table;
        table.layer = layer;
        table.dim = static_cast<int>(fv.cols());
        for (Eigen::Index i = 0; i < fv.rows(); ++i) {
          for (Eigen::Index j = 0; j < fv.cols(); ++j) table.rows.push_back(static_cast<float>(fv(i, j)));
          table.labels.push_back(static_cast<std::uint32_t>(val.labels[static_cast<std::size_t>(i)]));
        }
        save_features(table, pb_features);
        out << "wrote " << pb_features << "\n";
      }
      return 0;
    }

    if (in->parsed()) {
      const Config config = resolve_config(common, b, in, &bundle.config);
      const SamplerConfig sc = sampler_config(config);
      require(in_uncond || in_class >= 0, ErrorKind::InvalidInput, "pass --class <id> or --uncond");
      const int cls = in_uncond ? model.uncond_id() : in_class;
      Rng rng(sc.seed);
      const auto r = infill(tok, model, load_image(in_image), load_region_mask(in_region), cls, sc, rng);
      save_images({r.image}, default_out(), "infill", false, out);
      return 0;
    }

    if (ip->parsed()) {
      const Config config = resolve_config(common, b, ip, &bundle.config);
      const SamplerConfig sc = sampler_config(config);
      Rng rng(sc.seed);
      const auto r = interpolate_classes(tok, model, ip_a, ip_b, ip_lambda, sc, rng);
      save_images({r.image}, default_out(), "interp", false, out);
      return 0;
    }

    if (en->parsed()) {
      const Config config = resolve_config(common, b, en, &bundle.config);
      const SamplerConfig sc = sampler_config(config);
      Rng rng(sc.seed);
      const auto r = enrich(tok, model, load_image(en_image), sc, rng);
      save_images({r.image}, default_out(), "enrich", false, out);
      return 0;
    }

    if (ev->parsed()) {
      const Config config = resolve_config(common, b, ev, &bundle.config);
      const SamplerConfig sc = sampler_config(config);
      const Dataset train = load_split(ev_data, home / "train.bgrd", Split::Train);
      const Dataset val = load_split(ev_val, home / "val.bgrd", Split::Val);
      const ReconstructionStats rec = evaluate_reconstruction(tok, val);
      metric(out, "recon_psnr", rec.psnr);
      const int layer = model.config().backbone.probe_layer();
      const auto fx = extract_features(model, encode_all(tok, train.images), layer);
      const auto fv = extract_features(model, encode_all(tok, val.images), layer);
      const ProbeResult probe =
          fit_linear_probe(fx, train.labels, fv, val.labels, train.num_classes, probe_config(config));
      metric(out, "probe_top1", probe.top1);
      if (probe.has_top5) metric(out, "probe_top5", probe.top5);
      std::vector<BinaryCodeGrid> grids;
      std::vector<int> classes;
      int valid = 0;
      for (int c = 0; c < model.config().backbone.num_classes; ++c) {
        for (int i = 0; i < ev_per_class; ++i) {
          Rng rng(derive_seed(sc.seed, static_cast<std::uint64_t>(c * ev_per_class + i)));
          GenerateRequest request;
          request.class_id = c;
          grids.push_back(generate(model, request, sc, rng).grid);
          classes.push_back(c);
          valid += grids.back().valid() ? 1 : 0;
        }
      }
      std::set<std::vector<std::uint8_t>> distinct;
      for (const auto& g : grids) distinct.insert(std::vector<std::uint8_t>(g.bits().begin(), g.bits().end()));
      const auto pred = probe.predict(extract_features(model, grids, layer));
      int agree = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) agree += pred[i] == classes[i] ? 1 : 0;
      metric(out, "samples", static_cast<double>(grids.size()));
      metric(out, "valid_fraction", static_cast<double>(valid) / static_cast<double>(grids.size()));
      metric(out, "unique_fraction", static_cast<double>(distinct.size()) / static_cast<double>(grids.size()));
      metric(out, "class_consistency", static_cast<double>(agree) / static_cast<double>(grids.size()));
      return 0;
    }
  } catch (const Error& e) {
    err << "bigr: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "bigr: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace bigr::cli
