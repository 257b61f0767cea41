// Copyright 2026 The eihf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <memory>

#include "common.hpp"
#include "eihf/error.hpp"
#include "eihf/kernel_mmd.hpp"
#include "eihf/metrics.hpp"
#include "eihf/ood_scoring.hpp"
#include "eihf/parallel.hpp"

namespace eihf::cli {

namespace {

DType parse_dtype(const std::string& name) {
  if (name == "f64") return DType::kF64;
  if (name == "f32") return DType::kF32;
  fail(ErrorKind::kParameter, "dtype must be f32 or f64");
}

// Features either come from a file or from encoding an image set.
struct FeatureSource {
  std::string features;
  std::string images;
  std::string encoder = "toy:0";
  std::string transform;

  void add_options(CLI::App* sub) {
    sub->add_option("--features", features, "Feature matrix (FTB 2-D or CSV), rows = samples");
    sub->add_option("--images", images, "Image set to encode with --encoder");
    sub->add_option("--encoder", encoder, "toy:<seed>[,F,k]")->capture_default_str();
    sub->add_option("--transform", transform, "Transform metadata JSON (default: the input's sidecar)");
  }

  fs::path data_path() const { return features.empty() ? fs::path(images) : fs::path(features); }

  FeatureMatrix load() const {
    require(features.empty() != images.empty(), ErrorKind::kParameter, "give exactly one of --features or --images");
    if (!features.empty()) return load_features(features, format_from_path(features));
    const ImageSet set = load_image_set(images);
    const auto spec = parse_toy_encoder(encoder);
    const ToyEncoder enc(spec.seed, set.images.front().channels(), spec.filters, spec.kernel);
    return encode_images(enc, set.images);
  }

  std::optional<TransformMeta> transform_meta() const { return find_transform(data_path(), transform); }
};

std::string describe(const std::optional<TransformSpec>& t) {
  if (!t) return "identity";
  std::string s(to_string(t->variant));
  if (t->needs_alpha()) {
    s += "(" + std::string(to_string(t->params.op)) + ", k=" + std::to_string(t->params.kernel_size) +
         ", sigma=" + format_real(t->params.sigma_blur) + ", alpha=" +
         (t->params.alpha_hf ? format_real(*t->params.alpha_hf) : std::string("unset")) + ")";
  }
  return s;
}

void check_same_transform(const std::optional<TransformSpec>& reference, const std::optional<TransformSpec>& actual,
                          const std::string& what) {
  const TransformSpec identity;
  const TransformSpec& a = reference ? *reference : identity;
  const TransformSpec& b = actual ? *actual : identity;
  if (!(a == b)) {
    fail(ErrorKind::kMismatch, "train/test transform mismatch: " + what + " was built under " + describe(reference) +
                                   " but inputs were produced under " + describe(actual));
  }
}

std::optional<TransformSpec> spec_of(const std::optional<TransformMeta>& meta) {
  if (!meta) return std::nullopt;
  return meta->spec;
}

// ---------------------------------------------------------------------------
// transform

struct TransformOptions {
  std::string input;
  std::string out;
  std::string variant = "eihf";
  std::optional<double> alpha;
  std::string fit_alpha;
  std::size_t kernel_size = 5;
  double sigma = 1.0;
  double epsilon = ResidualParams::kDefaultEpsilon;
  std::string op = "gaussian";
  std::uint64_t seed = 0;
  std::vector<double> mean;
  std::vector<double> std;
  std::string dtype = "f64";
};

std::vector<ImageTensor> normalized(std::vector<ImageTensor> images, const std::optional<NormalizeSpec>& norm) {
  if (!norm) return images;
  for (auto& img : images) img = normalize_image(img, norm->mean, norm->std);
  return images;
}

void run_transform(const TransformOptions& o, const CLI::App& sub, Streams) {
  TransformMeta meta;
  meta.spec.variant = parse_transform_variant(o.variant);
  require(meta.spec.variant != TransformVariant::kIdentity, ErrorKind::kParameter, "transform: variant must not be identity");
  meta.spec.seed = o.seed;
  meta.spec.params.kernel_size = o.kernel_size;
  meta.spec.params.sigma_blur = o.sigma;
  meta.spec.params.epsilon = o.epsilon;
  meta.spec.params.op = parse_residual_operator(o.op);
  meta.spec.params.validate();
  if (!o.mean.empty() || !o.std.empty()) {
    require(o.mean.size() == o.std.size(), ErrorKind::kParameter, "transform: --mean and --std need the same length");
    meta.normalize = NormalizeSpec{o.mean, o.std};
  }

  ImageSet set = load_image_set(o.input);
  set.images = normalized(std::move(set.images), meta.normalize);
  for (const auto& img : set.images) {
    require(img.channels() == 3, ErrorKind::kValidation,
            "transform: inputs must have 3 channels, got " + std::to_string(img.channels()));
  }

  if (meta.spec.needs_alpha()) {
    require(o.alpha.has_value() != !o.fit_alpha.empty(), ErrorKind::kParameter,
            "transform: variant '" + o.variant + "' needs exactly one of --alpha or --fit-alpha");
    if (o.alpha) {
      meta.spec.params.alpha_hf = *o.alpha;
    } else {
      const auto fit_images = normalized(load_image_set(o.fit_alpha).images, meta.normalize);
      std::vector<AlphaAccumulator> partial(fit_images.size());
      parallel_for(fit_images.size(), [&](std::size_t i) { partial[i].add(meta.spec.alpha_source(fit_images[i])); });
      AlphaAccumulator total;
      for (const auto& p : partial) total.merge(p);
      meta.spec.params.alpha_hf = total.alpha(meta.spec.params.epsilon);
    }
  } else if (o.alpha || !o.fit_alpha.empty()) {
    warn("transform: variant '" + o.variant + "' does not use alpha; --alpha/--fit-alpha ignored");
  }

  ImageSet result;
  result.layout = set.layout;
  result.names = set.names;
  std::vector<std::optional<ImageTensor>> transformed(set.images.size());
  parallel_for(set.images.size(), [&](std::size_t i) { transformed[i] = meta.spec.apply(set.images[i], i); });
  for (auto& t : transformed) result.images.push_back(std::move(*t));
  save_image_set(result, o.out, parse_dtype(o.dtype));

  json report;
  report["transform"] = transform_to_json(meta);
  report["n_images"] = result.images.size();
  report["channels"] = result.images.front().channels();
  write_file_atomic(sidecar_path(o.out), dump(with_provenance(report, sub)));
}

// ---------------------------------------------------------------------------
// bandscan

struct BandscanOptions {
  std::string id;
  std::string ood;
  std::size_t bands = 8;
  std::string encoder = "toy:0";
  std::string estimator = "unbiased";
  std::string sigma = "median";
  std::string out;
  std::uint64_t seed = 0;
};

void run_bandscan(const BandscanOptions& o, const CLI::App& sub, Streams s) {
  ProfileOptions options;
  options.estimator = parse_mmd_estimator(o.estimator);
  if (o.sigma != "median") {
    try {
      options.sigma_k = std::stod(o.sigma);
    } catch (const std::logic_error&) {
      fail(ErrorKind::kParameter, "bandscan: --sigma must be 'median' or a positive number");
    }
    require(*options.sigma_k > 0.0, ErrorKind::kParameter, "bandscan: --sigma must be positive");
  }

  BandProfile profile;
  if (o.encoder.rfind("features:", 0) == 0) {
    const fs::path dir = o.encoder.substr(9);
    std::vector<FeatureMatrix> id_bands;
    std::vector<FeatureMatrix> ood_bands;
    for (std::size_t b = 1; b <= o.bands; ++b) {
      id_bands.push_back(load_features(dir / ("id_b" + std::to_string(b) + ".ftb"), FileFormat::kFtb));
      ood_bands.push_back(load_features(dir / ("ood_b" + std::to_string(b) + ".ftb"), FileFormat::kFtb));
    }
    std::optional<FeatureMatrix> id_full;
    std::optional<FeatureMatrix> ood_full;
    if (!options.sigma_k) {
      id_full = load_features(dir / "id_full.ftb", FileFormat::kFtb);
      ood_full = load_features(dir / "ood_full.ftb", FileFormat::kFtb);
    }
    profile = profile_from_features(id_bands, ood_bands, options, id_full ? &*id_full : nullptr,
                                    ood_full ? &*ood_full : nullptr);
  } else {
    const auto id = load_image_set(o.id).images;
    const auto ood = load_image_set(o.ood).images;
    const auto& first = id.front();
    for (const auto* set : {&id, &ood}) {
      for (const auto& img : *set) {
        require(img.height() == first.height() && img.width() == first.width() && img.channels() == first.channels(),
                ErrorKind::kValidation, "bandscan: all images must share one shape");
      }
    }
    const auto spec = parse_toy_encoder(o.encoder);
    const ToyEncoder encoder(spec.seed, first.channels(), spec.filters, spec.kernel);
    const auto masks = make_band_masks(first.height(), first.width(), o.bands);
    profile = bandwise_profile([&](const ImageTensor& img) { return encoder.encode(img); }, id, ood, masks, options);
  }

  std::string csv = "band,mmd2\n";
  for (std::size_t b = 0; b < profile.values.size(); ++b) {
    csv += std::to_string(b + 1) + "," + format_real(profile.values[b]) + "\n";
  }
  json report;
  report["bands"] = profile.bands;
  report["sigma_k"] = profile.sigma_k;
  report["estimator"] = std::string(to_string(profile.estimator));
  report["n_id"] = profile.n_id;
  report["n_ood"] = profile.n_ood;
  report["encoder"] = o.encoder;
  report["mmd2"] = profile.values;
  report["argmax_band"] = profile.argmax_band();
  report = with_provenance(report, sub);
  if (o.out.empty()) {
    s.out << dump(report);
    return;
  }
  write_file_atomic(o.out, csv);
  fs::path meta = o.out;
  meta.replace_extension(".json");
  require(meta != fs::path(o.out), ErrorKind::kParameter, "bandscan: --out must not end in .json");
  write_file_atomic(meta, dump(report));
}

// ---------------------------------------------------------------------------
// fit-stats

struct FitStatsOptions {
  FeatureSource source;
  std::string labels;
  double lambda = ClassStats::kDefaultShrinkage;
  std::string out;
  std::uint64_t seed = 0;
};

void run_fit_stats(const FitStatsOptions& o, const CLI::App& sub, Streams) {
  FeatureMatrix features = o.source.load();
  features = features.with_labels(load_labels(o.labels, format_from_path(o.labels)));
  const auto meta = o.source.transform_meta();
  const ClassStats stats = fit_class_stats(features, o.lambda).with_transform(spec_of(meta));
  save_class_stats(stats, o.out);

  json report;
  report["class_count"] = stats.class_count();
  report["dim"] = stats.dim();
  report["n"] = features.rows();
  report["lambda"] = stats.lambda();
  report["class_sizes"] = stats.class_sizes();
  report["encoder"] = o.source.features.empty() ? json(o.source.encoder) : json(nullptr);
  report["transform"] = meta ? transform_to_json(*meta) : json(nullptr);
  fs::path meta_path = o.out;
  meta_path += ".json";
  write_file_atomic(meta_path, dump(with_provenance(report, sub)));
}

// ---------------------------------------------------------------------------
// score

struct ScoreOptions {
  std::string method;
  FeatureSource source;
  std::string stats;
  std::string bank;
  std::size_t k = 50;
  bool no_normalize = false;
  double temperature = 1.0;
  std::string out;
  std::string format;
  std::uint64_t seed = 0;
};

void run_score(const ScoreOptions& o, const CLI::App&, Streams s) {
  ScoreSet scores;
  if (o.method == "mahalanobis") {
    require(!o.stats.empty(), ErrorKind::kParameter, "score: mahalanobis needs --stats");
    const ClassStats stats = load_class_stats(o.stats);
    // Check before encoding so a mismatch fails fast.
    check_same_transform(stats.transform(), spec_of(o.source.transform_meta()), "the stats bundle " + o.stats);
    scores = mahalanobis_scores(o.source.load(), stats);
  } else if (o.method == "msp") {
    scores = msp_scores(o.source.load());
  } else if (o.method == "energy") {
    scores = energy_scores(o.source.load(), o.temperature);
  } else if (o.method == "knn") {
    require(!o.bank.empty(), ErrorKind::kParameter, "score: knn needs --bank");
    const auto bank_meta = find_transform(o.bank, "");
    const auto input_meta = o.source.transform_meta();
    if (bank_meta || input_meta) check_same_transform(spec_of(bank_meta), spec_of(input_meta), "the bank " + o.bank);
    scores = knn_scores(o.source.load(), load_features(o.bank, format_from_path(o.bank)),
                        KnnOptions{o.k, !o.no_normalize});
  } else {
    fail(ErrorKind::kParameter, "score: unknown method '" + o.method + "'");
  }

  if (o.out.empty()) {
    for (double v : scores.scores) s.out << format_real(v) << '\n';
    return;
  }
  FileFormat format = format_from_path(o.out);
  if (o.format == "csv") format = FileFormat::kCsv;
  if (o.format == "ftb") format = FileFormat::kFtb;
  save_vector(scores.scores, o.out, format);
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string id_scores;
  std::string ood_scores;
  std::size_t bins = 100;
  double tpr = 0.95;
  std::string out;
  std::uint64_t seed = 0;
};

void run_eval(const EvalOptions& o, const CLI::App& sub, Streams s) {
  const ScoreSet id{load_vector(o.id_scores, format_from_path(o.id_scores))};
  const ScoreSet ood{load_vector(o.ood_scores, format_from_path(o.ood_scores))};
  const EvalReport r = evaluate(id, ood, o.bins, o.tpr);
  json report;
  report["auroc"] = r.auroc;
  report["fpr95"] = r.fpr95;
  report["tau95"] = r.tau95;
  report["overlap"] = r.overlap;
  report["bins"] = r.bins;
  report["n_id"] = r.n_id;
  report["n_ood"] = r.n_ood;
  report["tpr"] = r.tpr_target;
  report["bin_range"] = {r.bin_min, r.bin_max};
  emit_json(with_provenance(report, sub), o.out, s.out);
}

// ---------------------------------------------------------------------------
// diagnose

struct DiagnoseOptions {
  FeatureSource source;
  std::string labels;
  std::string stats;
  double lambda = ClassStats::kDefaultShrinkage;
  std::string out;
  std::uint64_t seed = 0;
};

void run_diagnose(const DiagnoseOptions& o, const CLI::App& sub, Streams s) {
  FeatureMatrix features = o.source.load();
  features = features.with_labels(load_labels(o.labels, format_from_path(o.labels)));
  const ClassStats stats = o.stats.empty() ? fit_class_stats(features, o.lambda) : load_class_stats(o.stats);
  const auto intra = v_intra(features);
  const GeometryReport g = diagnose_geometry(features, stats);
  json report;
  report["v_intra"] = intra.direct;
  report["v_intra_trace"] = intra.trace_form;
  report["mean_id_dist"] = g.mean_id_dist;
  report["trace_terms"] = g.trace_terms;
  report["n"] = features.rows();
  report["class_count"] = stats.class_count();
  emit_json(with_provenance(report, sub), o.out, s.out);
}

template <typename Options, typename Fn>
void bind(CLI::App* sub, std::shared_ptr<Options> opts, Runner& runner, Fn fn) {
  sub->parse_complete_callback([sub, opts, &runner, fn] {
    runner = [sub, opts, fn](Streams s) { fn(*opts, *sub, s); };
  });
}

void add_seed(CLI::App* sub, std::uint64_t& seed) {
  sub->add_option("--seed", seed, "Seed for every random draw")->capture_default_str();
}

}  // namespace

void add_transform(CLI::App& app, Runner& runner) {
  auto o = std::make_shared<TransformOptions>();
  auto* sub = app.add_subcommand("transform", "Append a residual (or ablation) channel to RGB images");
  sub->add_option("--input,input", o->input, "Image set: FTB/PNG file, batch FTB, directory, or list")->required();
  sub->add_option("--out", o->out, "Output .ftb file or directory")->required();
  sub->add_option("--variant", o->variant, "Fourth channel")
      ->check(CLI::IsMember({"eihf", "zero", "random", "lowfreq", "shuffled"}))
      ->capture_default_str();
  auto* alpha = sub->add_option("--alpha", o->alpha, "Fitted residual scale");
  sub->add_option("--fit-alpha", o->fit_alpha, "ID training image set to fit alpha on")->excludes(alpha);
  sub->add_option("--kernel-size", o->kernel_size, "Gaussian kernel size (odd)")->capture_default_str();
  sub->add_option("--sigma", o->sigma, "Gaussian kernel spread")->capture_default_str();
  sub->add_option("--epsilon", o->epsilon, "Stability constant in alpha")->capture_default_str();
  sub->add_option("--operator", o->op, "High-pass operator")
      ->check(CLI::IsMember({"gaussian", "sobel", "laplace"}))
      ->capture_default_str();
  sub->add_option("--mean", o->mean, "Per-channel normalization mean applied first")->expected(3);
  sub->add_option("--std", o->std, "Per-channel normalization std applied first")->expected(3);
  sub->add_option("--dtype", o->dtype, "Output payload type")->check(CLI::IsMember({"f64", "f32"}))->capture_default_str();
  add_seed(sub, o->seed);
  bind(sub, o, runner, run_transform);
}

void add_bandscan(CLI::App& app, Runner& runner) {
  auto o = std::make_shared<BandscanOptions>();
  auto* sub = app.add_subcommand("bandscan", "Band-wise MMD^2 profile between ID and OOD image sets");
  sub->add_option("--id", o->id, "ID image set");
  sub->add_option("--ood", o->ood, "OOD image set");
  sub->add_option("--bands", o->bands, "Number of annular bands")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--encoder", o->encoder, "toy:<seed>[,F,k] or features:<dir>")->capture_default_str();
  sub->add_option("--estimator", o->estimator, "MMD estimator")
      ->check(CLI::IsMember({"biased", "unbiased"}))
      ->capture_default_str();
  sub->add_option("--sigma", o->sigma, "RBF bandwidth: 'median' or a value")->capture_default_str();
  sub->add_option("--out", o->out, "CSV output (metadata JSON written next to it)");
  add_seed(sub, o->seed);
  bind(sub, o, runner, [](const BandscanOptions& opts, const CLI::App& s, Streams st) {
    if (opts.encoder.rfind("features:", 0) != 0) {
      require(!opts.id.empty() && !opts.ood.empty(), ErrorKind::kParameter, "bandscan: --id and --ood are required");
    }
    run_bandscan(opts, s, st);
  });
}

void add_fit_stats(CLI::App& app, Runner& runner) {
  auto o = std::make_shared<FitStatsOptions>();
  auto* sub = app.add_subcommand("fit-stats", "Fit class means and shrunk tied covariance");
  o->source.add_options(sub);
  sub->add_option("--labels", o->labels, "Class labels (FTB i64 or CSV)")->required();
  sub->add_option("--lambda", o->lambda, "Shrinkage toward the mean-variance diagonal")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sub->add_option("--out", o->out, "Stats bundle path")->required();
  add_seed(sub, o->seed);
  bind(sub, o, runner, run_fit_stats);
}

void add_score(CLI::App& app, Runner& runner) {
  auto o = std::make_shared<ScoreOptions>();
  auto* sub = app.add_subcommand("score", "Score samples (larger = more ID)");
  sub->add_option("--method", o->method, "Scoring rule")
      ->check(CLI::IsMember({"mahalanobis", "msp", "energy", "knn"}))
      ->required();
  o->source.add_options(sub);
  sub->add_option("--stats", o->stats, "Stats bundle from fit-stats (mahalanobis)");
  sub->add_option("--bank", o->bank, "Feature bank (knn)");
  sub->add_option("--k", o->k, "Neighbour rank (knn)")->capture_default_str();
  sub->add_flag("--no-normalize", o->no_normalize, "Disable l2 normalization (knn)");
  sub->add_option("--temperature", o->temperature, "Energy temperature")->capture_default_str();
  sub->add_option("--out", o->out, "Score file (.ftb or .csv)");
  sub->add_option("--format", o->format, "Override output format")->check(CLI::IsMember({"ftb", "csv"}));
  add_seed(sub, o->seed);
  bind(sub, o, runner, run_score);
}

void add_eval(CLI::App& app, Runner& runner) {
  auto o = std::make_shared<EvalOptions>();
  auto* sub = app.add_subcommand("eval", "AUROC, FPR at a TPR target, and histogram overlap");
  sub->add_option("--id-scores", o->id_scores, "ID scores (FTB/CSV)")->required();
  sub->add_option("--ood-scores", o->ood_scores, "OOD scores (FTB/CSV)")->required();
  sub->add_option("--bins", o->bins, "Overlap histogram bins")->capture_default_str();
  sub->add_option("--tpr", o->tpr, "TPR target")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  sub->add_option("--out", o->out, "JSON report path (default stdout)");
  add_seed(sub, o->seed);
  bind(sub, o, runner, run_eval);
}

void add_diagnose(CLI::App& app, Runner& runner) {
  auto o = std::make_shared<DiagnoseOptions>();
  auto* sub = app.add_subcommand("diagnose", "Within-class variance, mean ID distance, tr(Sigma_hat^-1 Sigma_c)");
  o->source.add_options(sub);
  sub->add_option("--labels", o->labels, "Class labels")->required();
  sub->add_option("--stats", o->stats, "Stats bundle (default: fit on the given features)");
  sub->add_option("--lambda", o->lambda, "Shrinkage when fitting")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  sub->add_option("--out", o->out, "JSON report path (default stdout)");
  add_seed(sub, o->seed);
  bind(sub, o, runner, run_diagnose);
}

}  // namespace eihf::cli
