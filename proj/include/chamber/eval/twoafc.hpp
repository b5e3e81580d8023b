#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "chamber/models/train.hpp"
#include "chamber/sim/dataset.hpp"

namespace chamber::eval {

/// Frozen-encoder feature extraction over raw RGB frames.
using EncoderFn =
    std::function<models::FeatureMatrix(const uint8_t* frames, int64_t n, int width, int height)>;

struct TwoAFCConfig {
    int decoder_hidden = 256;
    int decoder_epochs = 5;
    int decoder_batch = 32;
    float decoder_lr = 1e-3f;
    int trials = 576; // split evenly across the 12 viewpoint ranges
    uint64_t seed = 0;
};

struct TwoAFCTrial {
    int viewpoint = 0;
    double imprint_error = 0;
    double novel_error = 0;
    double credit = 0; // 1 correct, 0 incorrect, 0.5 exact tie
};

struct TwoAFCReport {
    std::vector<TwoAFCTrial> trials;
    double accuracy = 0;
    double chi_statistic = 0;
    double p_value = 1;
    int64_t trial_count = 0;
};

/// Documented tie rule: smaller imprint error scores 1, larger scores 0,
/// exact ties score 0.5.
double trial_credit(double imprint_error, double novel_error);

/// Unsupervised reconstruction head: feature -> hidden -> flattened pixels,
/// trained with MSE against the frames in [0,1].
class ReconDecoder {
public:
    ReconDecoder(int feature_dim, int hidden, int64_t pixel_count, uint64_t seed);

    void train(const models::FeatureMatrix& features, const uint8_t* frames,
               int64_t frame_bytes, int epochs, int batch, float lr, uint64_t seed);

    /// Mean squared reconstruction error of one image given its feature.
    double error(const float* feature, const uint8_t* frame) const;

    bool trained() const { return trained_; }

private:
    int feature_dim_, hidden_;
    int64_t pixel_count_;
    bool trained_ = false;
    std::vector<nn::NamedParam> params_;
};

/// Forced-choice evaluation: the decoder is trained unsupervised on the
/// imprint-condition images only (encoder frozen); each trial compares
/// reconstruction errors of one imprinted-object and one novel-object probe
/// image at the same viewpoint range.
TwoAFCReport two_afc_eval(const EncoderFn& encoder, const sim::EpisodeDataset& imprint_data,
                          const sim::ProbeFrames& probe, int imprinted_object,
                          const TwoAFCConfig& config);

void write_twoafc_report(const std::string& path, const TwoAFCReport& report);

} // namespace chamber::eval
