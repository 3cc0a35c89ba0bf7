#include "dafd/adaptation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "dafd/blas.hpp"
#include "dafd/errors.hpp"
#include "dafd/optim.hpp"

namespace dafd {

void AdaptationConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 2) throw ConfigError("batch size must be >= 2");
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (lambda_d < 0.0 || lambda_mmd < 0.0) throw ConfigError("lambda must be >= 0");
    if (kernel_widths.empty()) throw ConfigError("kernel width list must not be empty");
    for (double w : kernel_widths)
        if (w <= 0.0) throw ConfigError("kernel widths must be strictly positive");
}

// ---------------------------------------------------------------------------
// Multi-kernel MMD
// ---------------------------------------------------------------------------

namespace {

// Pairwise squared distances via the Gram expansion; then, per pair, the
// kernel sum K and the gradient weight W = sum_w k_w / sigma_w^2.
void kernel_blocks(const double* a, size_t na, const double* b, size_t nb, size_t dim,
                   const std::vector<double>& widths, std::vector<double>& K,
                   std::vector<double>& W) {
    std::vector<double> dots(na * nb);
    blas::dgemm(false, true, (int)na, (int)nb, (int)dim, 1.0, a, (int)dim, b, (int)dim, 0.0,
                dots.data(), (int)nb);
    std::vector<double> an(na), bn(nb);
    for (size_t i = 0; i < na; ++i) {
        double s = 0.0;
        const double* row = a + i * dim;
        for (size_t d = 0; d < dim; ++d) s += row[d] * row[d];
        an[i] = s;
    }
    for (size_t j = 0; j < nb; ++j) {
        double s = 0.0;
        const double* row = b + j * dim;
        for (size_t d = 0; d < dim; ++d) s += row[d] * row[d];
        bn[j] = s;
    }
    K.assign(na * nb, 0.0);
    W.assign(na * nb, 0.0);
    for (size_t i = 0; i < na; ++i) {
        for (size_t j = 0; j < nb; ++j) {
            const double d2 = std::max(0.0, an[i] + bn[j] - 2.0 * dots[i * nb + j]);
            double k = 0.0, w = 0.0;
            for (double s : widths) {
                const double inv = 1.0 / (s * s);
                const double kv = std::exp(-0.5 * d2 * inv);
                k += kv;
                w += kv * inv;
            }
            K[i * nb + j] = k;
            W[i * nb + j] = w;
        }
    }
}

double block_mean(const std::vector<double>& m) {
    double s = 0.0;
    for (double v : m) s += v;
    return s / (double)m.size();
}

}  // namespace

Tensor mmd_multikernel(Tape* tape, const Tensor& fs, const Tensor& ft,
                       const std::vector<double>& widths) {
    if (fs.rank() != 2 || ft.rank() != 2 || fs.dim(1) != ft.dim(1))
        throw ShapeError("mmd_multikernel: expected [Bs, D] and [Bt, D]");
    const size_t bs = fs.dim(0), bt = ft.dim(0), dim = fs.dim(1);
    if (bs == 0 || bt == 0) throw UsageError("mmd_multikernel: empty batch");
    if (widths.empty()) throw ConfigError("mmd_multikernel: no kernel widths");
    for (double w : widths)
        if (w <= 0.0) throw ConfigError("mmd_multikernel: widths must be positive");

    auto k_ss = std::make_shared<std::vector<double>>();
    auto k_tt = std::make_shared<std::vector<double>>();
    auto k_st = std::make_shared<std::vector<double>>();
    auto w_ss = std::make_shared<std::vector<double>>();
    auto w_tt = std::make_shared<std::vector<double>>();
    auto w_st = std::make_shared<std::vector<double>>();
    kernel_blocks(fs.data(), bs, fs.data(), bs, dim, widths, *k_ss, *w_ss);
    kernel_blocks(ft.data(), bt, ft.data(), bt, dim, widths, *k_tt, *w_tt);
    kernel_blocks(fs.data(), bs, ft.data(), bt, dim, widths, *k_st, *w_st);

    const double value = block_mean(*k_ss) + block_mean(*k_tt) - 2.0 * block_mean(*k_st);

    bool needs_grad = tape != nullptr && (fs.requires_grad() || ft.requires_grad());
    Tensor out(Shape{}, {value});
    out.set_requires_grad(needs_grad);
    out.mark_output();
    if (finite_checks_enabled()) check_finite(out, "mmd_multikernel");

    if (needs_grad) {
        Tensor fsc = fs, ftc = ft, oc = out;
        tape->record(out, [fsc, ftc, oc, w_ss, w_tt, w_st, bs, bt, dim]() mutable {
            if (!oc.has_grad()) return;
            const double up = oc.grad()[0];
            if (up == 0.0) return;

            // d/ds_i = (2/Bs^2) sum_j Wss[i,j] (s_j - s_i)
            //        - (2/(Bs Bt)) sum_j Wst[i,j] (t_j - s_i)
            if (fsc.requires_grad()) {
                std::vector<double> acc(bs * dim, 0.0);
                const double c_ss = 2.0 / ((double)bs * (double)bs);
                blas::dgemm(false, false, (int)bs, (int)dim, (int)bs, c_ss, w_ss->data(),
                            (int)bs, fsc.data(), (int)dim, 1.0, acc.data(), (int)dim);
                const double c_st = 2.0 / ((double)bs * (double)bt);
                blas::dgemm(false, false, (int)bs, (int)dim, (int)bt, -c_st, w_st->data(),
                            (int)bt, ftc.data(), (int)dim, 1.0, acc.data(), (int)dim);
                for (size_t i = 0; i < bs; ++i) {
                    double row_ss = 0.0, row_st = 0.0;
                    for (size_t j = 0; j < bs; ++j) row_ss += (*w_ss)[i * bs + j];
                    for (size_t j = 0; j < bt; ++j) row_st += (*w_st)[i * bt + j];
                    const double diag = -c_ss * row_ss + c_st * row_st;
                    const double* si = fsc.data() + i * dim;
                    double* arow = acc.data() + i * dim;
                    for (size_t d = 0; d < dim; ++d) arow[d] += diag * si[d];
                }
                double* g = fsc.grad_data();
                for (size_t i = 0; i < bs * dim; ++i) g[i] += up * acc[i];
            }
            if (ftc.requires_grad()) {
                std::vector<double> acc(bt * dim, 0.0);
                const double c_tt = 2.0 / ((double)bt * (double)bt);
                blas::dgemm(false, false, (int)bt, (int)dim, (int)bt, c_tt, w_tt->data(),
                            (int)bt, ftc.data(), (int)dim, 1.0, acc.data(), (int)dim);
                const double c_st = 2.0 / ((double)bs * (double)bt);
                // K_st is indexed [i (source), j (target)]; for t_j we need
                // column sums and W_st^T * S.
                blas::dgemm(true, false, (int)bt, (int)dim, (int)bs, -c_st, w_st->data(),
                            (int)bt, fsc.data(), (int)dim, 1.0, acc.data(), (int)dim);
                for (size_t j = 0; j < bt; ++j) {
                    double col_tt = 0.0, col_st = 0.0;
                    for (size_t i = 0; i < bt; ++i) col_tt += (*w_tt)[j * bt + i];
                    for (size_t i = 0; i < bs; ++i) col_st += (*w_st)[i * bt + j];
                    const double diag = -c_tt * col_tt + c_st * col_st;
                    const double* tj = ftc.data() + j * dim;
                    double* arow = acc.data() + j * dim;
                    for (size_t d = 0; d < dim; ++d) arow[d] += diag * tj[d];
                }
                double* g = ftc.grad_data();
                for (size_t i = 0; i < bt * dim; ++i) g[i] += up * acc[i];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace {

Tensor gather_rows(const WindowedDataset& ds, const std::vector<size_t>& order, size_t start,
                   size_t count, std::vector<int>* labels) {
    Tensor x({count, ds.num_features});
    if (labels != nullptr) labels->resize(count);
    for (size_t r = 0; r < count; ++r) {
        const size_t src = order[(start + r) % order.size()];
        std::memcpy(x.data() + r * ds.num_features, ds.row(src),
                    ds.num_features * sizeof(double));
        if (labels != nullptr) (*labels)[r] = ds.labels[src];
    }
    return x;
}

TrainResult train_core(ModelVariant variant, const WindowedDataset& source,
                       const WindowedDataset* target, const AdaptationConfig& cfg) {
    cfg.validate();
    if (source.num_rows == 0) throw DataError("training needs a non-empty source dataset");
    if (source.num_features != kInputWidth)
        throw ShapeError("source dataset has width " + std::to_string(source.num_features) +
                         ", model expects " + std::to_string(kInputWidth));
    const bool uses_target = variant == ModelVariant::kDann || variant == ModelVariant::kMmd;
    if (uses_target && (target == nullptr || target->num_rows == 0))
        throw DataError("adaptation method needs a non-empty target dataset");

    TrainResult result;
    result.model = make_model(variant, cfg.seed);
    BackboneModel& model = result.model;
    Adam adam(model.trainable_params(), AdamConfig{.lr = cfg.learning_rate});

    const size_t B = (size_t)cfg.batch_size;
    const size_t steps_per_epoch = (source.num_rows + B - 1) / B;

    const auto t_start = std::chrono::steady_clock::now();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto e_start = std::chrono::steady_clock::now();
        auto src_order =
            derive_rng(cfg.seed, "shuffle/source", (uint64_t)epoch).permutation(source.num_rows);
        std::vector<size_t> tgt_order;
        if (uses_target)
            tgt_order = derive_rng(cfg.seed, "shuffle/target", (uint64_t)epoch)
                            .permutation(target->num_rows);

        double clf_sum = 0.0, align_sum = 0.0;
        for (size_t step = 0; step < steps_per_epoch; ++step) {
            const size_t start = step * B;
            const size_t rows = std::min(B, source.num_rows - start);

            Tape tape;
            std::vector<int> ys;
            Tensor xs = gather_rows(source, src_order, start, rows, &ys);
            SeededRng src_drop = derive_rng(cfg.seed, "dropout/source", (uint64_t)epoch,
                                            (uint64_t)step);
            ForwardCtx ctx{&tape, RunMode::kTrain, &src_drop, /*update_bn_stats=*/true};
            Tensor f_s = forward_features(ctx, xs, model);
            Tensor logits = forward_classifier(ctx, f_s, model);
            Tensor l_clf = softmax_cross_entropy(&tape, logits, ys);

            Tensor loss = l_clf;
            double align_val = 0.0;
            if (uses_target) {
                Tensor xt = gather_rows(*target, tgt_order, start, rows, nullptr);
                SeededRng tgt_drop = derive_rng(cfg.seed, "dropout/target", (uint64_t)epoch,
                                                (uint64_t)step);
                ForwardCtx tctx{&tape, RunMode::kTrain, &tgt_drop, /*update_bn_stats=*/true};
                Tensor f_t = forward_features(tctx, xt, model);
                if (variant == ModelVariant::kDann) {
                    Tensor both = concat_rows(&tape, f_s, f_t);
                    Tensor reversed = gradient_reversal(&tape, both, cfg.lambda_d);
                    Tensor dlogits = forward_discriminator(&tape, reversed, *model.disc);
                    std::vector<int> domains(2 * rows, 0);
                    for (size_t r = rows; r < 2 * rows; ++r) domains[r] = 1;
                    Tensor l_d = softmax_cross_entropy(&tape, dlogits, domains);
                    align_val = l_d.item();
                    loss = add(&tape, l_clf, l_d);
                } else {
                    Tensor l_mmd = mmd_multikernel(&tape, f_s, f_t, cfg.kernel_widths);
                    align_val = l_mmd.item();
                    loss = add(&tape, l_clf, scale(&tape, l_mmd, cfg.lambda_mmd));
                }
            }

            if (!std::isfinite(loss.item()))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", step " + std::to_string(step) + " (l_clf=" +
                                    std::to_string(l_clf.item()) + ", l_align=" +
                                    std::to_string(align_val) + ")");

            adam.zero_grad();
            tape.backward(loss);
            adam.step();

            clf_sum += l_clf.item();
            align_sum += align_val;
        }

        const auto e_end = std::chrono::steady_clock::now();
        result.trace.push_back(TrainStepRecord{
            epoch, clf_sum / (double)steps_per_epoch, align_sum / (double)steps_per_epoch,
            std::chrono::duration<double, std::milli>(e_end - e_start).count()});
    }
    result.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

}  // namespace

TrainResult train_baseline(const WindowedDataset& source, const AdaptationConfig& cfg) {
    return train_core(ModelVariant::kBaseline, source, nullptr, cfg);
}

TrainResult train_bn_baseline(const WindowedDataset& source, const AdaptationConfig& cfg) {
    return train_core(ModelVariant::kAdaBn, source, nullptr, cfg);
}

TrainResult train_dann(const WindowedDataset& source, const WindowedDataset& target,
                       const AdaptationConfig& cfg) {
    return train_core(ModelVariant::kDann, source, &target, cfg);
}

TrainResult train_mmd(const WindowedDataset& source, const WindowedDataset& target,
                      const AdaptationConfig& cfg) {
    return train_core(ModelVariant::kMmd, source, &target, cfg);
}

TrainResult train_method(const WindowedDataset& source, const WindowedDataset* target,
                         const AdaptationConfig& cfg) {
    switch (cfg.method) {
        case ModelVariant::kBaseline:
            return train_core(ModelVariant::kBaseline, source, nullptr, cfg);
        case ModelVariant::kDann:
        case ModelVariant::kMmd:
            if (target == nullptr) throw DataError("method needs a target dataset");
            return train_core(cfg.method, source, target, cfg);
        case ModelVariant::kAdaBn: {
            TrainResult r = train_core(ModelVariant::kAdaBn, source, nullptr, cfg);
            if (target == nullptr) throw DataError("adabn needs a target dataset");
            const auto t0 = std::chrono::steady_clock::now();
            r.model = adapt_adabn(r.model, *target);
            r.train_seconds +=
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            return r;
        }
    }
    throw ConfigError("unknown adaptation method");
}

// ---------------------------------------------------------------------------
// AdaBN
// ---------------------------------------------------------------------------

namespace {

// Forward a chunk up to (but not including) BN stage `stage` of a
// BN-variant extractor, eval mode. stage: 1..4. Returns the pre-BN
// activations as an [R', p] view.
Tensor forward_to_bn_input(BackboneModel& model, const Tensor& x, int stage) {
    FeatureExtractor& fe = model.fe;
    const size_t B = x.dim(0);

    auto bn_sigmoid = [&](const Tensor& conv_out, BnLayer& bn) -> Tensor {
        const size_t L = conv_out.dim(1), C = conv_out.dim(2);
        Tensor flat = reshape(nullptr, conv_out, {B * L, C});
        Tensor n = batch_norm_eval(nullptr, flat, bn.gamma, bn.beta, bn.running_mean,
                                   bn.running_var, bn.eps);
        return sigmoid(nullptr, reshape(nullptr, n, {B, L, C}));
    };
    auto as_matrix = [&](const Tensor& t) {
        return reshape(nullptr, t, {B * t.dim(1), t.dim(2)});
    };

    Tensor h = reshape(nullptr, x, {B, kInputWidth, 1});
    Tensor c1 = conv1d(nullptr, h, fe.conv1_kernel, fe.conv1_bias);
    if (stage == 1) return as_matrix(c1);
    Tensor a1 = bn_sigmoid(c1, fe.bn1);
    Tensor c2 = conv1d(nullptr, a1, fe.conv2_kernel, fe.conv2_bias);
    if (stage == 2) return as_matrix(c2);
    Tensor a2 = bn_sigmoid(c2, fe.bn2);
    Tensor c3 = conv1d(nullptr, a2, fe.conv3_kernel, fe.conv3_bias);
    if (stage == 3) return as_matrix(c3);
    Tensor a3 = bn_sigmoid(c3, fe.bn3);
    Tensor flat = reshape(nullptr, a3, {B, kFlatWidth});
    return dense(nullptr, flat, fe.dense_w, fe.dense_b);
}

}  // namespace

BackboneModel adapt_adabn(const BackboneModel& trained, const WindowedDataset& target) {
    if (!trained.fe.has_bn)
        throw UsageError("adapt_adabn: model has no batch-normalization layers");
    if (target.num_rows < 2)
        throw DataError("adapt_adabn: target set needs at least 2 rows, got " +
                        std::to_string(target.num_rows));

    BackboneModel model = trained.clone();
    BnLayer* layers[4] = {&model.fe.bn1, &model.fe.bn2, &model.fe.bn3, &model.fe.bn4};
    constexpr size_t kChunk = 256;

    for (int stage = 1; stage <= 4; ++stage) {
        BnLayer& bn = *layers[stage - 1];
        const size_t p = bn.width();

        // Two passes over the target set keep the variance exact even for
        // near-constant features: mean first, then squared deviations.
        std::vector<double> mean(p, 0.0), var(p, 0.0);
        size_t total_rows = 0;
        for (size_t start = 0; start < target.num_rows; start += kChunk) {
            const size_t rows = std::min(kChunk, target.num_rows - start);
            Tensor x({rows, target.num_features});
            std::memcpy(x.data(), target.row(start), rows * target.num_features * sizeof(double));
            Tensor act = forward_to_bn_input(model, x, stage);
            const size_t R = act.dim(0);
            for (size_t r = 0; r < R; ++r) {
                const double* row = act.data() + r * p;
                for (size_t j = 0; j < p; ++j) mean[j] += row[j];
            }
            total_rows += R;
        }
        for (size_t j = 0; j < p; ++j) mean[j] /= (double)total_rows;
        for (size_t start = 0; start < target.num_rows; start += kChunk) {
            const size_t rows = std::min(kChunk, target.num_rows - start);
            Tensor x({rows, target.num_features});
            std::memcpy(x.data(), target.row(start), rows * target.num_features * sizeof(double));
            Tensor act = forward_to_bn_input(model, x, stage);
            const size_t R = act.dim(0);
            for (size_t r = 0; r < R; ++r) {
                const double* row = act.data() + r * p;
                for (size_t j = 0; j < p; ++j) {
                    const double d = row[j] - mean[j];
                    var[j] += d * d;
                }
            }
        }
        for (size_t j = 0; j < p; ++j) var[j] = std::max(0.0, var[j] / (double)total_rows);

        bn.running_mean = mean;
        bn.running_var = var;
    }
    return model;
}

// ---------------------------------------------------------------------------
// Proxy A-distance
// ---------------------------------------------------------------------------

double proxy_a_distance(const std::vector<double>& fs, size_t ns, const std::vector<double>& ft,
                        size_t nt, size_t dim, uint64_t seed) {
    if (ns < 20 || nt < 20)
        throw DataError("proxy_a_distance: needs at least 20 rows per domain, got " +
                        std::to_string(ns) + " and " + std::to_string(nt));
    if (fs.size() != ns * dim || ft.size() != nt * dim)
        throw ShapeError("proxy_a_distance: buffer sizes do not match rows x dim");

    // Balanced 50/50 split inside each domain.
    SeededRng rng = derive_rng(seed, "pad/split");
    auto split = [&](size_t n) {
        std::vector<size_t> idx = rng.permutation(n);
        const size_t half = n / 2;
        return std::pair(std::vector<size_t>(idx.begin(), idx.begin() + half),
                         std::vector<size_t>(idx.begin() + half, idx.end()));
    };
    auto [s_train, s_test] = split(ns);
    auto [t_train, t_test] = split(nt);

    auto build = [&](const std::vector<double>& src, const std::vector<size_t>& rows) {
        std::vector<double> out(rows.size() * dim);
        for (size_t r = 0; r < rows.size(); ++r)
            std::memcpy(out.data() + r * dim, src.data() + rows[r] * dim, dim * sizeof(double));
        return out;
    };
    const size_t n_train = s_train.size() + t_train.size();
    Tensor x_train({n_train, dim});
    std::vector<int> y_train(n_train);
    {
        auto s = build(fs, s_train);
        auto t = build(ft, t_train);
        std::memcpy(x_train.data(), s.data(), s.size() * sizeof(double));
        std::memcpy(x_train.data() + s.size(), t.data(), t.size() * sizeof(double));
        for (size_t r = 0; r < s_train.size(); ++r) y_train[r] = 0;
        for (size_t r = s_train.size(); r < n_train; ++r) y_train[r] = 1;
    }

    // Logistic domain classifier: a single dense layer, full-batch Adam.
    SeededRng init = derive_rng(seed, "pad/init");
    const double limit = std::sqrt(6.0 / (double)(dim + 2));
    Tensor w({dim, 2});
    for (auto& v : w.values()) v = init.uniform(-limit, limit);
    w.set_requires_grad(true).set_name("pad.w");
    Tensor b({2});
    b.set_requires_grad(true).set_name("pad.b");
    Adam adam({w, b}, AdamConfig{.lr = 0.01});
    for (int it = 0; it < 200; ++it) {
        Tape tape;
        Tensor logits = dense(&tape, x_train, w, b);
        Tensor loss = softmax_cross_entropy(&tape, logits, y_train);
        adam.zero_grad();
        tape.backward(loss);
        adam.step();
    }

    // Held-out domain classification error.
    size_t wrong = 0, total = 0;
    auto score = [&](const std::vector<double>& src, const std::vector<size_t>& rows,
                     int label) {
        if (rows.empty()) return;
        Tensor x({rows.size(), dim});
        auto m = build(src, rows);
        std::memcpy(x.data(), m.data(), m.size() * sizeof(double));
        Tensor logits = dense(nullptr, x, w, b);
        for (size_t r = 0; r < rows.size(); ++r) {
            const int pred = argmax_class(logits.data() + r * 2, 2);
            if (pred != label) ++wrong;
            ++total;
        }
    };
    score(fs, s_test, 0);
    score(ft, t_test, 1);
    const double eps = (double)wrong / (double)total;
    return std::clamp(2.0 * (1.0 - 2.0 * eps), 0.0, 2.0);
}

void save_trace_csv(const std::vector<TrainStepRecord>& trace, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open trace file '" + path + "'");
    f << "epoch,l_clf,l_align,ms\n";
    char buf[128];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.3f\n", r.epoch, r.l_clf, r.l_align,
                      r.ms);
        f << buf;
    }
}

}  // namespace dafd
