#include <algorithm>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>

#include <CLI11.hpp>

#include "msecnn/checkpoint.hpp"
#include "msecnn/dataset.hpp"
#include "msecnn/frontend.hpp"
#include "msecnn/metrics.hpp"
#include "msecnn/model.hpp"
#include "msecnn/run_config.hpp"
#include "msecnn/training.hpp"
#include "msecnn/wav.hpp"

namespace fs = std::filesystem;
using namespace msecnn;

namespace {

// Flag-level overrides; a flag the user set wins over the config file.
struct ConfigFlags {
  std::string config_path;
  std::optional<int> sample_rate, n_fft, hop, n_mels;
  std::optional<double> f_min, f_max, clip_seconds;
  std::optional<std::string> variant, channels, pooling;
  std::optional<double> dropout, learning_rate, beta1, beta2, adam_eps;
  std::optional<long long> batch_size, max_epochs, seed, patience, top_tags;
};

void add_audio_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.config_path, "config file (key = value with [sections])");
  cmd->add_option("--sample-rate", f.sample_rate, "audio sample rate in Hz");
  cmd->add_option("--n-fft", f.n_fft, "FFT size (power of two)");
  cmd->add_option("--hop", f.hop, "STFT hop in samples");
  cmd->add_option("--n-mels", f.n_mels, "mel filter count");
  cmd->add_option("--f-min", f.f_min, "lowest mel filter edge in Hz");
  cmd->add_option("--f-max", f.f_max, "highest mel filter edge in Hz");
  cmd->add_option("--clip-seconds", f.clip_seconds, "fixed clip length in seconds");
}

void add_model_flags(CLI::App* cmd, ConfigFlags& f, bool with_variant = true) {
  if (with_variant) cmd->add_option("--variant", f.variant, "model variant: fcn5 or msecnn");
  cmd->add_option("--channels", f.channels, "conv channels, e.g. 64,128,128,128,64");
  cmd->add_option("--pooling", f.pooling, "pool sizes, e.g. 2x4,2x4,2x4,3x5,4x4");
  cmd->add_option("--dropout", f.dropout, "dropout rate before the dense head");
}

void add_train_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--lr", f.learning_rate, "adam learning rate");
  cmd->add_option("--beta1", f.beta1, "adam beta1");
  cmd->add_option("--beta2", f.beta2, "adam beta2");
  cmd->add_option("--adam-eps", f.adam_eps, "adam epsilon");
  cmd->add_option("--batch-size", f.batch_size, "training batch size");
  cmd->add_option("--epochs", f.max_epochs, "training epoch limit");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--patience", f.patience, "early stopping patience in epochs (0 disables)");
}

RunConfig resolve_config(const ConfigFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) load_config_file(cfg, f.config_path);
  if (f.sample_rate) cfg.audio.sample_rate = *f.sample_rate;
  if (f.n_fft) cfg.audio.n_fft = *f.n_fft;
  if (f.hop) cfg.audio.hop = *f.hop;
  if (f.n_mels) cfg.audio.n_mels = *f.n_mels;
  if (f.f_min) cfg.audio.f_min = *f.f_min;
  if (f.f_max) cfg.audio.f_max = *f.f_max;
  if (f.clip_seconds) cfg.audio.clip_seconds = *f.clip_seconds;
  if (f.variant) cfg.variant = *f.variant;
  if (f.channels) cfg.channels = parse_channels(*f.channels);
  if (f.pooling) cfg.pooling = parse_pooling(*f.pooling);
  if (f.dropout) cfg.dropout = *f.dropout;
  if (f.learning_rate) cfg.train.learning_rate = *f.learning_rate;
  if (f.beta1) cfg.train.beta1 = *f.beta1;
  if (f.beta2) cfg.train.beta2 = *f.beta2;
  if (f.adam_eps) cfg.train.eps = *f.adam_eps;
  if (f.batch_size) cfg.train.batch_size = static_cast<Index>(*f.batch_size);
  if (f.max_epochs) cfg.train.max_epochs = static_cast<Index>(*f.max_epochs);
  if (f.seed) cfg.train.seed = static_cast<std::uint64_t>(*f.seed);
  if (f.patience) cfg.train.early_stop_patience = static_cast<Index>(*f.patience);
  if (f.top_tags) cfg.top_tags = static_cast<Index>(*f.top_tags);
  return cfg;
}

void echo_config(const RunConfig& cfg) {
  std::cout << "# resolved configuration\n" << format_config(cfg) << "#\n";
}

int cmd_extract(const ConfigFlags& flags, const std::string& annotations,
                const std::string& audio_root, const std::string& cache_out) {
  const RunConfig cfg = resolve_config(flags);
  echo_config(cfg);

  const AnnotationTable table = parse_annotations(annotations);
  const size_t k = std::min<size_t>(static_cast<size_t>(cfg.top_tags), table.tag_columns.size());
  DatasetManifest manifest = select_top_tags(table, k);
  assign_splits(manifest);

  fs::create_directories(cache_out);
  cache_build(manifest, cfg.audio, audio_root, cache_out);
  save_manifest(manifest, fs::path(cache_out) / "manifest.json");

  std::uintmax_t bytes = 0;
  for (const ManifestClip& clip : manifest.clips)
    bytes += fs::file_size(feature_path(cache_out, clip.clip_id));
  std::cout << "clips " << manifest.clips.size() << " tags " << manifest.tags.size()
            << " cache_bytes " << bytes << "\n";
  return 0;
}

int cmd_train(const ConfigFlags& flags, const std::string& cache_dir,
              const std::string& manifest_path, const std::string& out_path) {
  const RunConfig cfg = resolve_config(flags);
  echo_config(cfg);
  cfg.train.validate();

  const DatasetManifest manifest = load_manifest(manifest_path);
  const ModelConfig model_cfg =
      cfg.model(static_cast<Index>(manifest.tags.size()), manifest.tags);
  plan_model(model_cfg);

  const Index n_mels = model_cfg.input_shape[1], n_frames = model_cfg.input_shape[2];
  const CachedDataset train(manifest, cache_dir, n_mels, n_frames, Split::Train);
  const CachedDataset val(manifest, cache_dir, n_mels, n_frames, Split::Val);
  std::cout << "train_clips " << train.size() << " val_clips " << val.size() << "\n";

  ModelState<float> state = build_model<float>(model_cfg, cfg.train.seed);
  FitResult<float> result = fit(std::move(state), model_cfg, cfg.train, train,
                                val.size() > 0 ? &val : nullptr, std::cout);
  save_checkpoint(result.best_state, model_cfg, out_path);
  std::cout << "final_train_loss " << result.final_train_loss << "\n";
  std::cout << "best_val_roc_auc " << result.best_val_roc << "\n";
  std::cout << "checkpoint " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& cache_dir,
             const std::string& manifest_path, const std::string& split_name) {
  const Split split = split_from_string(split_name);
  const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  std::cout << "# resolved configuration\n";
  std::cout << "model.variant = " << to_string(ckpt.config.variant) << "\n";
  std::cout << "model.n_tags = " << ckpt.config.n_tags << "\n";
  std::cout << "eval.split = " << split_name << "\n#\n";

  const DatasetManifest manifest = load_manifest(manifest_path);
  if (static_cast<Index>(manifest.tags.size()) != ckpt.config.n_tags)
    throw ArgumentError("manifest has " + std::to_string(manifest.tags.size()) +
                        " tags but the checkpoint was trained with " +
                        std::to_string(ckpt.config.n_tags));
  const CachedDataset data(manifest, cache_dir, ckpt.config.input_shape[1],
                           ckpt.config.input_shape[2], split);
  if (data.size() == 0)
    throw ArgumentError("split '" + split_name + "' has no clips in this manifest");

  const EvalMatrix m = collect_scores(ckpt.state, ckpt.config, data, Index{16});
  const MacroReport report = macro_metrics(m);
  std::cout << format_tsv(report);
  return 0;
}

int cmd_tag(const ConfigFlags& flags, const std::string& ckpt_path, const std::string& wav_path,
            long long top_k) {
  if (top_k < 1) throw ArgumentError("--top must be at least 1");
  const RunConfig cfg = resolve_config(flags);
  echo_config(cfg);

  const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  if (static_cast<Index>(cfg.audio.n_mels) != ckpt.config.input_shape[1] ||
      cfg.audio.target_frames() != ckpt.config.input_shape[2])
    throw ArgumentError(
        "audio configuration yields a (" + std::to_string(cfg.audio.n_mels) + ", " +
        std::to_string(cfg.audio.target_frames()) + ") spectrogram but the checkpoint expects (" +
        std::to_string(ckpt.config.input_shape[1]) + ", " +
        std::to_string(ckpt.config.input_shape[2]) + "); pass the training-time audio config");

  const AudioClip clip = load_wav(wav_path);
  const MelSpectrogram mel = mel_spectrogram(clip, cfg.audio);
  Tensor<float> x({1, 1, mel.values.shape[0], mel.values.shape[1]});
  std::copy(mel.values.data.begin(), mel.values.data.end(), x.data.begin());

  const auto fwd = forward(ckpt.state, ckpt.config, x, BnMode::Infer);
  std::vector<Index> order(static_cast<size_t>(ckpt.config.n_tags));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return fwd.scores(0, a) > fwd.scores(0, b);
  });
  const Index k = std::min<Index>(static_cast<Index>(top_k), ckpt.config.n_tags);
  for (Index i = 0; i < k; ++i) {
    const Index t = order[static_cast<size_t>(i)];
    const std::string name = static_cast<Index>(ckpt.config.tag_names.size()) == ckpt.config.n_tags
                                 ? ckpt.config.tag_names[static_cast<size_t>(t)]
                                 : "tag" + std::to_string(t);
    std::cout << name << " " << fwd.scores(0, t) << "\n";
  }
  return 0;
}

void inspect_variant(const ModelConfig& cfg) {
  const ModelPlan plan = plan_model(cfg);
  const FlopReport flops = count_flops(cfg);
  std::cout << "variant " << to_string(cfg.variant) << "\n";
  for (size_t k = 0; k < plan.levels.size(); ++k) {
    const LevelPlan& lv = plan.levels[k];
    std::cout << "level " << (k + 1) << " in_channels " << lv.in_channels << " conv_channels "
              << lv.conv_channels << " out_channels " << lv.out_channels << " spatial "
              << lv.h_in << "x" << lv.w_in << " -> " << lv.h_out << "x" << lv.w_out
              << " pool " << lv.pool.h << "x" << lv.pool.w << " conv_macs "
              << flops.conv_macs[k] << "\n";
  }
  std::cout << "feature_width " << plan.feature_width << "\n";
  std::cout << "params " << count_params(cfg) << "\n";
  std::cout << "dense_macs " << flops.dense_macs << "\n";
  std::cout << "total_macs " << flops.total << "\n";
}

int cmd_inspect(const ConfigFlags& flags, const std::string& which) {
  const RunConfig cfg = resolve_config(flags);
  echo_config(cfg);
  std::cout << "# mac counts cover conv and dense layers only (pooling, norm, activation excluded)\n";
  // Tag count does not change structure comparisons; use the MTT protocol size.
  const Index n_tags = 50;

  if (which != "fcn5" && which != "msecnn" && which != "both")
    throw ArgumentError("--variant must be fcn5, msecnn, or both, got '" + which + "'");

  RunConfig base = cfg;
  std::optional<FlopReport> fcn5_flops, mse_flops;
  std::optional<Index> fcn5_width, mse_width;
  if (which == "fcn5" || which == "both") {
    base.variant = "fcn5";
    const ModelConfig mc = base.model(n_tags);
    inspect_variant(mc);
    fcn5_flops = count_flops(mc);
    fcn5_width = plan_model(mc).feature_width;
  }
  if (which == "msecnn" || which == "both") {
    base.variant = "msecnn";
    const ModelConfig mc = base.model(n_tags);
    inspect_variant(mc);
    mse_flops = count_flops(mc);
    mse_width = plan_model(mc).feature_width;
  }
  if (which == "both") {
    const double mac_ratio =
        static_cast<double>(mse_flops->total) / static_cast<double>(fcn5_flops->total);
    const double width_ratio =
        static_cast<double>(*mse_width) / static_cast<double>(*fcn5_width);
    std::cout << "mac_ratio msecnn/fcn5 " << mac_ratio << "\n";
    std::cout << "feature_width_ratio msecnn/fcn5 " << width_ratio << "\n";
  }
  return 0;
}

int cmd_gradcheck(long long seed, double eps) {
  std::cout << "# resolved configuration\n";
  std::cout << "gradcheck.seed = " << seed << "\n";
  std::cout << "gradcheck.eps = " << eps << "\n#\n";
  bool ok = true;
  for (const Variant variant : {Variant::Fcn5, Variant::MseCnn}) {
    const ModelConfig cfg = tiny_model_config(variant);
    const GradCheckResult r = gradient_check(cfg, static_cast<std::uint64_t>(seed), eps);
    std::cout << "gradcheck " << to_string(variant) << " max_rel_error " << r.max_rel_error
              << " worst " << r.worst_param << "\n";
    if (!(r.max_rel_error < 1e-4)) ok = false;
  }
  std::cout << (ok ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
  return ok ? 0 : 1;
}

int cmd_synth(const ConfigFlags& flags, long long n, long long tags, long long seed,
              const std::string& out_dir) {
  const RunConfig cfg = resolve_config(flags);
  echo_config(cfg);
  SynthConfig synth;
  synth.n_clips = static_cast<Index>(n);
  synth.n_tags = static_cast<Index>(tags);
  synth.seed = static_cast<std::uint64_t>(seed);
  synth.sample_rate = cfg.audio.sample_rate;
  synth.clip_seconds = cfg.audio.clip_seconds;
  synth_generate(synth, out_dir);
  std::cout << "wrote " << synth.n_clips << " clips with " << synth.n_tags << " tags under "
            << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"music tagger: mel front end, fcn5/msecnn models, training and evaluation"};
  app.require_subcommand(1);

  ConfigFlags extract_flags;
  std::string extract_annotations, extract_audio_root, extract_cache_out;
  CLI::App* extract = app.add_subcommand("extract", "build the feature cache and manifest");
  extract->add_option("--annotations", extract_annotations, "annotation TSV")->required();
  extract->add_option("--audio-root", extract_audio_root, "directory of WAV files")->required();
  extract->add_option("--cache-out", extract_cache_out, "output cache directory")->required();
  add_audio_flags(extract, extract_flags);
  extract->add_option("--top-tags", extract_flags.top_tags, "tag vocabulary size cap");

  ConfigFlags train_flags;
  std::string train_cache, train_manifest, train_out;
  CLI::App* train = app.add_subcommand("train", "train a model on a feature cache");
  train->add_option("--cache", train_cache, "feature cache directory")->required();
  train->add_option("--manifest", train_manifest, "manifest path")->required();
  train->add_option("--out", train_out, "checkpoint output path")->required();
  add_audio_flags(train, train_flags);
  add_model_flags(train, train_flags);
  add_train_flags(train, train_flags);

  std::string eval_ckpt, eval_cache, eval_manifest, eval_split = "test";
  CLI::App* eval = app.add_subcommand("eval", "report per-tag and macro metrics for a split");
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--cache", eval_cache, "feature cache directory")->required();
  eval->add_option("--manifest", eval_manifest, "manifest path")->required();
  eval->add_option("--split", eval_split, "train, val, or test");

  ConfigFlags tag_flags;
  std::string tag_ckpt, tag_wav;
  long long tag_top = 10;
  CLI::App* tag = app.add_subcommand("tag", "print the top scoring tags for one WAV file");
  tag->add_option("--ckpt", tag_ckpt, "checkpoint path")->required();
  tag->add_option("--wav", tag_wav, "input WAV file")->required();
  tag->add_option("--top", tag_top, "number of tags to print");
  add_audio_flags(tag, tag_flags);

  ConfigFlags inspect_flags;
  std::string inspect_which = "both";
  CLI::App* inspect = app.add_subcommand("inspect", "print shapes, parameter and MAC counts");
  inspect->add_option("--variant", inspect_which, "fcn5, msecnn, or both");
  add_audio_flags(inspect, inspect_flags);
  add_model_flags(inspect, inspect_flags, /*with_variant=*/false);

  long long gradcheck_seed = 1;
  double gradcheck_eps = 1e-4;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference check of both tiny variants");
  gradcheck->add_option("--seed", gradcheck_seed, "generator seed");
  gradcheck->add_option("--eps", gradcheck_eps, "finite-difference step");

  ConfigFlags synth_flags;
  long long synth_n = 32, synth_tags = 4, synth_seed = 7;
  std::string synth_out;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic cue-tagged corpus");
  synth->add_option("--n", synth_n, "clip count");
  synth->add_option("--tags", synth_tags, "tag count (at most 8)");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory")->required();
  add_audio_flags(synth, synth_flags);

  try {
    app.parse(argc, argv);
    if (*extract)
      return cmd_extract(extract_flags, extract_annotations, extract_audio_root,
                         extract_cache_out);
    if (*train) return cmd_train(train_flags, train_cache, train_manifest, train_out);
    if (*eval) return cmd_eval(eval_ckpt, eval_cache, eval_manifest, eval_split);
    if (*tag) return cmd_tag(tag_flags, tag_ckpt, tag_wav, tag_top);
    if (*inspect) return cmd_inspect(inspect_flags, inspect_which);
    if (*gradcheck) return cmd_gradcheck(gradcheck_seed, gradcheck_eps);
    if (*synth) return cmd_synth(synth_flags, synth_n, synth_tags, synth_seed, synth_out);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const InternalError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
