#include "chamber/eval/twoafc.hpp"

#include <cmath>

#include "chamber/core/rng.hpp"
#include "chamber/eval/stats.hpp"
#include "chamber/io/table.hpp"

namespace chamber::eval {

double trial_credit(double imprint_error, double novel_error) {
    if (imprint_error < novel_error) return 1.0;
    if (imprint_error > novel_error) return 0.0;
    return 0.5;
}

ReconDecoder::ReconDecoder(int feature_dim, int hidden, int64_t pixel_count, uint64_t seed)
    : feature_dim_(feature_dim), hidden_(hidden), pixel_count_(pixel_count) {
    Rng rng(Rng::derive(seed, 0xdec0de));
    auto init = [&](nn::Shape shape, double stddev) {
        auto t = nn::Tensor::zeros(std::move(shape));
        for (auto& v : t.data()) v = float(rng.truncated_normal(stddev));
        t.set_requires_grad();
        return t;
    };
    params_.push_back({"w1", init({feature_dim, hidden}, 1.0 / std::sqrt(double(feature_dim)))});
    params_.push_back({"b1", nn::Tensor::zeros({hidden})});
    params_.back().tensor.set_requires_grad();
    params_.push_back({"w2", init({hidden, pixel_count}, 1.0 / std::sqrt(double(hidden)))});
    params_.push_back({"b2", nn::Tensor::zeros({pixel_count})});
    params_.back().tensor.set_requires_grad();
}

namespace {

nn::Tensor decoder_forward(const std::vector<nn::NamedParam>& params, nn::Tensor x) {
    auto h = nn::relu(nn::add_rows(nn::matmul(x, params[0].tensor), params[1].tensor));
    return nn::add_rows(nn::matmul(h, params[2].tensor), params[3].tensor);
}

} // namespace

void ReconDecoder::train(const models::FeatureMatrix& features, const uint8_t* frames,
                         int64_t frame_bytes, int epochs, int batch, float lr, uint64_t seed) {
    if (epochs <= 0) throw std::invalid_argument("decoder: training requires epochs > 0");
    if (frame_bytes != pixel_count_)
        throw std::invalid_argument("decoder: pixel count mismatch");
    nn::Adam adam(params_, lr);
    std::vector<int64_t> order(size_t(features.n));
    for (int64_t i = 0; i < features.n; ++i) order[size_t(i)] = i;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng rng(Rng::derive(seed, 0xd00d + uint64_t(epoch)));
        rng.shuffle(order);
        const int64_t n_steps = features.n / batch;
        for (int64_t step = 0; step < n_steps; ++step) {
            std::vector<float> x(size_t(batch) * size_t(feature_dim_));
            std::vector<float> y(size_t(batch) * size_t(pixel_count_));
            for (int i = 0; i < batch; ++i) {
                const int64_t r = order[size_t(step * batch + i)];
                std::copy(features.row(r), features.row(r) + feature_dim_,
                          x.data() + i * feature_dim_);
                const uint8_t* f = frames + r * frame_bytes;
                for (int64_t j = 0; j < frame_bytes; ++j)
                    y[size_t(i * pixel_count_ + j)] = float(f[j]) / 255.f;
            }
            auto out = decoder_forward(params_, nn::Tensor::from({batch, feature_dim_}, x));
            auto loss = nn::mse(out, nn::Tensor::from({batch, pixel_count_}, std::move(y)));
            if (!std::isfinite(double(loss.item())))
                throw std::runtime_error("decoder: non-finite loss");
            adam.zero_grad();
            nn::backward(loss);
            adam.step();
        }
    }
    trained_ = true;
}

double ReconDecoder::error(const float* feature, const uint8_t* frame) const {
    if (!trained_) throw std::logic_error("decoder: error() before training");
    nn::NoGradGuard ng;
    auto out = decoder_forward(
        params_, nn::Tensor::from({1, feature_dim_},
                                  std::vector<float>(feature, feature + feature_dim_)));
    double acc = 0;
    for (int64_t j = 0; j < pixel_count_; ++j) {
        const double d = double(out.data()[size_t(j)]) - double(frame[j]) / 255.0;
        acc += d * d;
    }
    return acc / double(pixel_count_);
}

TwoAFCReport two_afc_eval(const EncoderFn& encoder, const sim::EpisodeDataset& imprint_data,
                          const sim::ProbeFrames& probe, int imprinted_object,
                          const TwoAFCConfig& config) {
    if (config.decoder_epochs <= 0)
        throw std::invalid_argument("two_afc_eval: decoder must be trained (epochs > 0)");
    if (config.trials < 12 || config.trials % 12 != 0)
        throw std::invalid_argument("two_afc_eval: trials must be a positive multiple of 12");

    // Decoder sees only the imprint-condition images, encoder frozen.
    auto imprint_features = encoder(imprint_data.frame(0), imprint_data.size(),
                                    imprint_data.width(), imprint_data.height());
    ReconDecoder decoder(imprint_features.dim, config.decoder_hidden,
                         imprint_data.frame_bytes(), config.seed);
    decoder.train(imprint_features, imprint_data.frame(0), imprint_data.frame_bytes(),
                  config.decoder_epochs, config.decoder_batch, config.decoder_lr, config.seed);

    // Trial frames: per viewpoint range, pair sampled imprinted-object images
    // with same-viewpoint novel-object images.
    const int per_vp = config.trials / 12;
    std::vector<int64_t> imprint_rows, novel_rows;
    Rng rng(Rng::derive(config.seed, 0x2afc));
    for (int vp = 0; vp < 12; ++vp) {
        std::vector<int64_t> imp, nov;
        for (int64_t i = 0; i < probe.n; ++i) {
            if (probe.viewpoint[size_t(i)] != vp) continue;
            (probe.object_label[size_t(i)] == imprinted_object ? imp : nov).push_back(i);
        }
        if (int(imp.size()) < per_vp || int(nov.size()) < per_vp)
            throw std::invalid_argument("two_afc_eval: not enough probe images at viewpoint " +
                                        std::to_string(vp));
        rng.shuffle(imp);
        rng.shuffle(nov);
        for (int k = 0; k < per_vp; ++k) {
            imprint_rows.push_back(imp[size_t(k)]);
            novel_rows.push_back(nov[size_t(k)]);
        }
    }

    auto features_of = [&](const std::vector<int64_t>& rows) {
        std::vector<uint8_t> buf(rows.size() * size_t(probe.frame_bytes()));
        for (size_t i = 0; i < rows.size(); ++i)
            std::copy(probe.frame(rows[i]), probe.frame(rows[i]) + probe.frame_bytes(),
                      buf.data() + i * size_t(probe.frame_bytes()));
        auto fm = encoder(buf.data(), int64_t(rows.size()), probe.width, probe.height);
        return std::make_pair(std::move(fm), std::move(buf));
    };
    auto [imp_feat, imp_pixels] = features_of(imprint_rows);
    auto [nov_feat, nov_pixels] = features_of(novel_rows);

    TwoAFCReport report;
    for (size_t i = 0; i < imprint_rows.size(); ++i) {
        TwoAFCTrial trial;
        trial.viewpoint = probe.viewpoint[size_t(imprint_rows[i])];
        trial.imprint_error = decoder.error(imp_feat.row(int64_t(i)),
                                            imp_pixels.data() + i * size_t(probe.frame_bytes()));
        trial.novel_error = decoder.error(nov_feat.row(int64_t(i)),
                                          nov_pixels.data() + i * size_t(probe.frame_bytes()));
        trial.credit = trial_credit(trial.imprint_error, trial.novel_error);
        report.trials.push_back(trial);
    }
    report.trial_count = int64_t(report.trials.size());
    double credit_sum = 0;
    for (const auto& t : report.trials) credit_sum += t.credit;
    report.accuracy = credit_sum / double(report.trial_count);
    const auto chi = chi_square_test(credit_sum, report.trial_count, 0.5);
    report.chi_statistic = chi.statistic;
    report.p_value = chi.p_value;
    return report;
}

void write_twoafc_report(const std::string& path, const TwoAFCReport& report) {
    io::Table t;
    t.header = {"viewpoint", "imprint_error", "novel_error", "credit"};
    for (const auto& trial : report.trials)
        t.rows.push_back({std::to_string(trial.viewpoint), io::format_double(trial.imprint_error, 8),
                          io::format_double(trial.novel_error, 8), io::format_double(trial.credit, 1)});
    t.rows.push_back({"accuracy", io::format_double(report.accuracy), "", ""});
    t.rows.push_back({"chi_square", io::format_double(report.chi_statistic), "", ""});
    t.rows.push_back({"p_value", io::format_double(report.p_value, 10), "", ""});
    t.write(path);
}

} // namespace chamber::eval
