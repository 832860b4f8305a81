#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "covdet/image.hpp"
#include "covdet/net.hpp"

namespace covdet {

inline constexpr int kCropSide = 57;
inline constexpr int kPatchSide = 28;

struct CropRecord {
    ImageBuffer crop;  // kCropSide x kCropSide
    std::string source;
    int cx = 0, cy = 0;  // crop centre in the source image

    std::string provenance() const;
};

struct CropStore {
    std::vector<CropRecord> crops;
    bool empty() const { return crops.empty(); }
    size_t size() const { return crops.size(); }
};

/// Harvests up to `per_image` random crops per *.pgm image in `dir`, keeping
/// only informative ones (mean |LoG| above threshold). Deterministic per
/// seed. Throws std::runtime_error("empty corpus") when the directory holds
/// no readable image of side >= kCropSide.
CropStore harvest_crops(const std::string& dir, int per_image, std::uint64_t seed,
                        double sigma = 2.5, double threshold = 1.5);

/// Store persistence: one PGM per crop plus an index.csv with provenance.
void save_crop_store(const CropStore& store, const std::string& dir);
CropStore load_crop_store(const std::string& dir);

/// Splits by hash of provenance so the assignment is stable across runs.
void split_validation(const CropStore& all, CropStore& train_out, CropStore& val_out,
                      int val_percent = 5);

struct JitterConfig {
    double additive = 20.4;       // +-8% of the [0,255] range, per pixel
    double multiplicative = 0.4;  // +-40% of the pixel intensity
    bool enabled = true;
};

/// Training triple: patch x1, transformed+distorted patch x2, and the
/// transformation g with x2 = g x1 (before the photometric jitter).
struct TripletSample {
    ImageBuffer x1;
    ImageBuffer x2;
    Transform2D g;
};

struct TrainConfig {
    int batch_size = 64;
    int pairs_per_epoch = 40000;
    double lr = 0.01;
    double lr_drop_factor = 10.0;
    int max_epochs = 60;
    std::uint64_t seed = 0;
    Head head = Head::Translation;
    double nuisance_translation_max = 0.0;  // rotation head only, pixels
    JitterConfig jitter;
};

/// Parses a plain-text key=value config. Keys match the TrainConfig field
/// names exactly; unknown keys raise std::invalid_argument.
TrainConfig parse_train_config(const std::string& path);
void validate_config(const TrainConfig& cfg);

ConstraintClass head_class(Head h);

/// Draws one training triple from a kCropSide crop. For the translation
/// head the two patches are axis-aligned copies whose relative displacement
/// is sampled from the set keeping footprint overlap >= 27%; for the
/// rotation head x2 is resampled under a uniform rotation about its centre
/// with the centre displacement bounded by nuisance_translation_max.
TripletSample sample_triplet(const ImageBuffer& crop, const TrainConfig& cfg, Rng& rng);
TripletSample sample_triplet(const ImageBuffer& crop, const TrainConfig& cfg, std::uint64_t seed);

/// Covariance loss for one pair of raw 2-vector outputs, with analytic
/// gradients with respect to the raw outputs (chain rule through the
/// orientation normalisation for the rotation head). A vanishing
/// orientation vector marks the sample degenerate instead of throwing.
struct CovLoss {
    double loss = 0.0;
    std::array<double, 2> d_raw1{0.0, 0.0};
    std::array<double, 2> d_raw2{0.0, 0.0};
    bool degenerate = false;
};
CovLoss covariance_loss(ConstraintClass cls, std::span<const double> raw1,
                        std::span<const double> raw2, const Transform2D& g,
                        RotationConvention convention = RotationConvention::InverseComposition);

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    int skipped = 0;  // degenerate samples in the epoch
};

struct TrainResult {
    Parameters params;  // best-validation parameters
    std::vector<EpochStats> history;
    bool diverged = false;
};

/// Siamese training loop: per epoch, pairs are resampled from the train
/// store, both patches of a pair run through the same parameters, and the
/// learning rate is divided by lr_drop_factor when validation stops
/// improving (patience 5 epochs, relative threshold 1e-3, at most 2 drops).
/// A non-finite loss aborts with diverged=true and the last finite
/// parameters.
TrainResult train(const CropStore& train_store, const CropStore& val_store,
                  const NetworkSpec& spec, const TrainConfig& cfg, bool normalize_input = true,
                  const std::function<void(int, const EpochStats&)>& log = nullptr);

/// Mean covariance loss of the model on a fixed triplet list; no mutation.
double validate(const Parameters& params, const NetworkSpec& spec,
                const std::vector<TripletSample>& triplets, ConstraintClass cls,
                bool normalize_input);

}  // namespace covdet
