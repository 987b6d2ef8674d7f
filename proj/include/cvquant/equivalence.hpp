#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include "cvquant/color.hpp"
#include "cvquant/confusion.hpp"
#include "cvquant/rng.hpp"

namespace cvquant {

using Vec3 = std::array<double, 3>;

// Row-major 3x3 matrix M, applied to LAB row vectors as v * M.
struct LinearTransform {
    std::array<double, 9> m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
};

// One hidden ReLU layer: relu(v * w1 + b1) * w2 + b2.
// w1 is 3 x hidden row-major, w2 is hidden x 3 row-major.
struct NonlinearTransform {
    int hidden = 100;
    std::uint64_t seed = 0;
    std::vector<double> w1;
    std::vector<double> b1;
    std::vector<double> w2;
    std::vector<double> b2;
};

enum class TransformKind { linear, nonlinear };

inline TransformKind transform_kind_from_string(std::string_view s) {
    if (s == "linear") return TransformKind::linear;
    if (s == "nonlinear") return TransformKind::nonlinear;
    throw std::invalid_argument("unknown transform kind '" + std::string(s) + "'");
}

inline std::string_view to_string(TransformKind k) {
    return k == TransformKind::linear ? "linear" : "nonlinear";
}

// A user's color-equivalence scorer: a fitted LAB-space transform plus the
// epsilon guard that keeps the inverse-distance score finite when two colors
// land on the same transformed point.
struct EquivalenceFunction {
    std::variant<LinearTransform, NonlinearTransform> transform = LinearTransform{};
    double epsilon = 1e-6;

    TransformKind kind() const {
        return std::holds_alternative<LinearTransform>(transform) ? TransformKind::linear
                                                                  : TransformKind::nonlinear;
    }
};

inline Vec3 apply_transform(const LinearTransform& t, const Lab& v) {
    return Vec3{
        v.L * t.m[0] + v.a * t.m[3] + v.b * t.m[6],
        v.L * t.m[1] + v.a * t.m[4] + v.b * t.m[7],
        v.L * t.m[2] + v.a * t.m[5] + v.b * t.m[8],
    };
}

inline Vec3 apply_transform(const NonlinearTransform& t, const Lab& v) {
    const std::size_t h = std::size_t(t.hidden);
    const Vec3 in{v.L, v.a, v.b};
    Vec3 out{t.b2[0], t.b2[1], t.b2[2]};
    for (std::size_t j = 0; j < h; ++j) {
        double a = t.b1[j];
        for (std::size_t i = 0; i < 3; ++i) a += in[i] * t.w1[i * h + j];
        if (a > 0.0) {
            for (std::size_t k = 0; k < 3; ++k) out[k] += a * t.w2[j * 3 + k];
        }
    }
    return out;
}

inline Vec3 apply_transform(const EquivalenceFunction& f, const Lab& v) {
    return std::visit([&](const auto& t) { return apply_transform(t, v); }, f.transform);
}

inline Vec3 transform_color(const EquivalenceFunction& f, Rgb24 c) {
    return apply_transform(f, rgb_to_lab(c));
}

inline double vec3_distance(const Vec3& p, const Vec3& q) {
    const double d0 = p[0] - q[0];
    const double d1 = p[1] - q[1];
    const double d2 = p[2] - q[2];
    return std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
}

// Inverse distance in the transformed space: higher means the user is more
// likely to confuse the pair. Symmetric; equals 1/epsilon when the points
// coincide.
inline double delta_u(const EquivalenceFunction& f, Rgb24 c1, Rgb24 c2) {
    return 1.0 / (f.epsilon + vec3_distance(transform_color(f, c1), transform_color(f, c2)));
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::pair<Lab, Lab>> lab_rows(const ConfusionDataset& d, bool confusions_only) {
    std::vector<std::pair<Lab, Lab>> rows;
    rows.reserve(d.events.size());
    for (const auto& e : d.events) {
        if (confusions_only && e.correct()) continue;
        rows.emplace_back(rgb_to_lab(e.target), rgb_to_lab(e.selected));
    }
    return rows;
}

// Solves a * x = rhs for the three columns of x, 3x3 row-major, Gaussian
// elimination with partial pivoting. Throws on a numerically singular pivot.
inline std::array<double, 9> solve3(std::array<double, 9> a, std::array<double, 9> rhs) {
    double scale = 0.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) throw std::runtime_error("rank-deficient system: all-zero matrix");

    std::array<int, 3> perm = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int row = col + 1; row < 3; ++row) {
            if (std::abs(a[perm[row] * 3 + col]) > std::abs(a[perm[pivot] * 3 + col])) pivot = row;
        }
        std::swap(perm[col], perm[pivot]);
        const double p = a[perm[col] * 3 + col];
        if (std::abs(p) < 1e-9 * scale) {
            throw std::runtime_error("rank-deficient system: pivot " + std::to_string(col) +
                                     " is numerically zero (target colors span fewer than 3 dimensions)");
        }
        for (int row = col + 1; row < 3; ++row) {
            const double factor = a[perm[row] * 3 + col] / p;
            for (int k = col; k < 3; ++k) a[perm[row] * 3 + k] -= factor * a[perm[col] * 3 + k];
            for (int k = 0; k < 3; ++k) rhs[perm[row] * 3 + k] -= factor * rhs[perm[col] * 3 + k];
        }
    }

    std::array<double, 9> x{};
    for (int col = 2; col >= 0; --col) {
        for (int k = 0; k < 3; ++k) {
            double v = rhs[perm[col] * 3 + k];
            for (int j = col + 1; j < 3; ++j) v -= a[perm[col] * 3 + j] * x[j * 3 + k];
            x[col * 3 + k] = v / a[perm[col] * 3 + col];
        }
    }
    return x;
}

}  // namespace detail

// Least-squares fit of M minimizing ||selected - target * M||^2 over the
// event rows (normal equations). Targets must span all three LAB axes.
inline LinearTransform fit_linear(const ConfusionDataset& d, bool confusions_only = false) {
    const auto rows = detail::lab_rows(d, confusions_only);
    if (rows.size() < 3) throw std::invalid_argument("fit_linear: need at least 3 events");

    // a = Y^T Y, rhs = Y^T Yhat, accumulated in row order for determinism.
    std::array<double, 9> a{};
    std::array<double, 9> rhs{};
    for (const auto& [y, yhat] : rows) {
        const Vec3 t{y.L, y.a, y.b};
        const Vec3 s{yhat.L, yhat.a, yhat.b};
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                a[i * 3 + j] += t[i] * t[j];
                rhs[i * 3 + j] += t[i] * s[j];
            }
        }
    }

    LinearTransform out;
    try {
        out.m = detail::solve3(a, rhs);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string("fit_linear: ") + e.what());
    }
    return out;
}

// Training contract for the one-hidden-layer fit, fixed for reproducibility:
// inputs and outputs are z-score standardized (folded back into the weights
// afterwards, so the stored transform consumes raw LAB), weights start from
// seeded Gaussians, and the optimizer is full-batch Adam with the constants
// below. Identical (dataset, hidden, seed) give bit-identical weights.
struct MlpTrainingConfig {
    int iterations = 200;
    double learning_rate = 0.05;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
};

inline NonlinearTransform fit_nonlinear(const ConfusionDataset& d, int hidden = 100,
                                        std::uint64_t seed = 0, bool confusions_only = false,
                                        const MlpTrainingConfig& tc = {}) {
    if (hidden < 1) throw std::invalid_argument("fit_nonlinear: hidden must be >= 1");
    const auto rows = detail::lab_rows(d, confusions_only);
    if (rows.size() < 2) throw std::invalid_argument("fit_nonlinear: need at least 2 events");

    const std::size_t n = rows.size();
    const std::size_t h = std::size_t(hidden);

    std::vector<double> x(n * 3), y(n * 3);
    for (std::size_t r = 0; r < n; ++r) {
        x[r * 3 + 0] = rows[r].first.L;
        x[r * 3 + 1] = rows[r].first.a;
        x[r * 3 + 2] = rows[r].first.b;
        y[r * 3 + 0] = rows[r].second.L;
        y[r * 3 + 1] = rows[r].second.a;
        y[r * 3 + 2] = rows[r].second.b;
    }

    Vec3 mean_x{}, mean_y{}, sd_x{}, sd_y{};
    for (std::size_t r = 0; r < n; ++r) {
        for (int c = 0; c < 3; ++c) {
            mean_x[c] += x[r * 3 + c];
            mean_y[c] += y[r * 3 + c];
        }
    }
    for (int c = 0; c < 3; ++c) {
        mean_x[c] /= double(n);
        mean_y[c] /= double(n);
    }
    for (std::size_t r = 0; r < n; ++r) {
        for (int c = 0; c < 3; ++c) {
            sd_x[c] += (x[r * 3 + c] - mean_x[c]) * (x[r * 3 + c] - mean_x[c]);
            sd_y[c] += (y[r * 3 + c] - mean_y[c]) * (y[r * 3 + c] - mean_y[c]);
        }
    }
    for (int c = 0; c < 3; ++c) {
        sd_x[c] = std::sqrt(sd_x[c] / double(n));
        sd_y[c] = std::sqrt(sd_y[c] / double(n));
        if (sd_x[c] < 1e-9) sd_x[c] = 1.0;  // constant column
        if (sd_y[c] < 1e-9) sd_y[c] = 1.0;
    }
    for (std::size_t r = 0; r < n; ++r) {
        for (int c = 0; c < 3; ++c) {
            x[r * 3 + c] = (x[r * 3 + c] - mean_x[c]) / sd_x[c];
            y[r * 3 + c] = (y[r * 3 + c] - mean_y[c]) / sd_y[c];
        }
    }

    Rng rng(seed);
    std::vector<double> w1(3 * h), b1(h, 0.0), w2(h * 3), b2(3, 0.0);
    const double init1 = std::sqrt(2.0 / 3.0);
    const double init2 = std::sqrt(2.0 / double(h));
    for (auto& w : w1) w = rng.normal(0.0, init1);
    for (auto& w : w2) w = rng.normal(0.0, init2);

    std::vector<double> gw1(w1.size()), gb1(b1.size()), gw2(w2.size()), gb2(b2.size());
    std::vector<double> mw1(w1.size(), 0.0), vw1(w1.size(), 0.0);
    std::vector<double> mb1(b1.size(), 0.0), vb1(b1.size(), 0.0);
    std::vector<double> mw2(w2.size(), 0.0), vw2(w2.size(), 0.0);
    std::vector<double> mb2(b2.size(), 0.0), vb2(b2.size(), 0.0);
    std::vector<double> act(n * h), err(n * 3);

    const double grad_scale = 2.0 / (double(n) * 3.0);

    for (int it = 1; it <= tc.iterations; ++it) {
        double loss = 0.0;
        std::fill(gw1.begin(), gw1.end(), 0.0);
        std::fill(gb1.begin(), gb1.end(), 0.0);
        std::fill(gw2.begin(), gw2.end(), 0.0);
        std::fill(gb2.begin(), gb2.end(), 0.0);

        for (std::size_t r = 0; r < n; ++r) {
            const double* xr = &x[r * 3];
            double* ar = &act[r * h];
            for (std::size_t j = 0; j < h; ++j) {
                double a = b1[j];
                for (int i = 0; i < 3; ++i) a += xr[i] * w1[std::size_t(i) * h + j];
                ar[j] = a > 0.0 ? a : 0.0;
            }
            for (int k = 0; k < 3; ++k) {
                double o = b2[std::size_t(k)];
                for (std::size_t j = 0; j < h; ++j) o += ar[j] * w2[j * 3 + std::size_t(k)];
                const double e = o - y[r * 3 + std::size_t(k)];
                err[r * 3 + std::size_t(k)] = e;
                loss += e * e;
            }
        }
        loss /= double(n) * 3.0;
        if (!std::isfinite(loss)) throw std::runtime_error("fit_nonlinear: training loss is not finite");

        for (std::size_t r = 0; r < n; ++r) {
            const double* xr = &x[r * 3];
            const double* ar = &act[r * h];
            const double* er = &err[r * 3];
            for (std::size_t j = 0; j < h; ++j) {
                if (ar[j] > 0.0) {
                    double back = 0.0;
                    for (int k = 0; k < 3; ++k) {
                        gw2[j * 3 + std::size_t(k)] += ar[j] * er[k];
                        back += w2[j * 3 + std::size_t(k)] * er[k];
                    }
                    gb1[j] += back;
                    for (int i = 0; i < 3; ++i) gw1[std::size_t(i) * h + j] += xr[i] * back;
                } else {
                    for (int k = 0; k < 3; ++k) gw2[j * 3 + std::size_t(k)] += ar[j] * er[k];
                }
            }
            for (int k = 0; k < 3; ++k) gb2[std::size_t(k)] += er[k];
        }

        const double corr1 = 1.0 - std::pow(tc.adam_beta1, it);
        const double corr2 = 1.0 - std::pow(tc.adam_beta2, it);
        const auto adam_step = [&](std::vector<double>& w, std::vector<double>& g, std::vector<double>& m,
                                   std::vector<double>& v) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double grad = g[i] * grad_scale;
                m[i] = tc.adam_beta1 * m[i] + (1.0 - tc.adam_beta1) * grad;
                v[i] = tc.adam_beta2 * v[i] + (1.0 - tc.adam_beta2) * grad * grad;
                w[i] -= tc.learning_rate * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + tc.adam_epsilon);
            }
        };
        adam_step(w1, gw1, mw1, vw1);
        adam_step(b1, gb1, mb1, vb1);
        adam_step(w2, gw2, mw2, vw2);
        adam_step(b2, gb2, mb2, vb2);
    }

    // Fold the standardization into the stored weights so apply_transform
    // consumes raw LAB: first layer absorbs the input z-score, last layer
    // the output de-standardization. Both folds are exact affine rewrites.
    NonlinearTransform t;
    t.hidden = hidden;
    t.seed = seed;
    t.w1.resize(3 * h);
    t.b1 = b1;
    t.w2.resize(h * 3);
    t.b2.assign(3, 0.0);
    for (std::size_t j = 0; j < h; ++j) {
        for (int i = 0; i < 3; ++i) {
            t.w1[std::size_t(i) * h + j] = w1[std::size_t(i) * h + j] / sd_x[std::size_t(i)];
            t.b1[j] -= mean_x[std::size_t(i)] * w1[std::size_t(i) * h + j] / sd_x[std::size_t(i)];
        }
    }
    for (std::size_t j = 0; j < h; ++j) {
        for (int k = 0; k < 3; ++k) t.w2[j * 3 + std::size_t(k)] = w2[j * 3 + std::size_t(k)] * sd_y[std::size_t(k)];
    }
    for (int k = 0; k < 3; ++k) t.b2[std::size_t(k)] = b2[std::size_t(k)] * sd_y[std::size_t(k)] + mean_y[std::size_t(k)];
    return t;
}

inline EquivalenceFunction fit_equivalence(const ConfusionDataset& d, TransformKind kind,
                                           int hidden = 100, std::uint64_t seed = 0,
                                           double epsilon = 1e-6) {
    EquivalenceFunction f;
    f.epsilon = epsilon;
    if (kind == TransformKind::linear) {
        f.transform = fit_linear(d);
    } else {
        f.transform = fit_nonlinear(d, hidden, seed);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Held-out distance-change validation
// ---------------------------------------------------------------------------

struct ValidationReport {
    int splits = 10;        // requested
    int splits_used = 0;    // splits whose filtered test set was non-empty
    double mean_relative_change = 0.0;
    double std_relative_change = 0.0;  // population std across used splits
    double train_fraction = 0.8;
    std::vector<double> split_means;   // one entry per used split
};

// Splits the events, fits on the training part via fit(train), and measures
// (d_transformed - d_lab) / d_lab over the unique confused color pairs of
// the test part, after dropping every pair in which either color was
// observed anywhere in the training part. Negative means the transform
// pulls confused colors together.
template <typename FitFn>
ValidationReport validate_distance_change_with(const ConfusionDataset& d, FitFn&& fit, int splits = 10,
                                               double train_fraction = 0.8, std::uint64_t seed = 0) {
    if (splits < 1) throw std::invalid_argument("validate_distance_change: splits must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("validate_distance_change: train_fraction must be in (0, 1)");
    }

    ValidationReport report;
    report.splits = splits;
    report.train_fraction = train_fraction;

    std::vector<double> split_means;
    for (int s = 0; s < splits; ++s) {
        Rng rng(derive_seed(seed, std::uint64_t(s)));
        std::vector<std::size_t> order(d.events.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);

        const auto train_count = std::size_t(std::ceil(train_fraction * double(order.size())));
        ConfusionDataset train;
        train.user_id = d.user_id;
        std::unordered_set<std::uint32_t> train_colors;
        for (std::size_t i = 0; i < train_count; ++i) {
            const auto& e = d.events[order[i]];
            train.events.push_back(e);
            train_colors.insert(pack_rgb(e.target));
            train_colors.insert(pack_rgb(e.selected));
        }

        std::unordered_set<std::uint64_t> seen_pairs;
        std::vector<std::pair<Rgb24, Rgb24>> pairs;
        for (std::size_t i = train_count; i < order.size(); ++i) {
            const auto& e = d.events[order[i]];
            if (e.correct()) continue;
            if (train_colors.count(pack_rgb(e.target)) || train_colors.count(pack_rgb(e.selected))) continue;
            const std::uint32_t a = pack_rgb(e.target);
            const std::uint32_t b = pack_rgb(e.selected);
            const std::uint64_t key = a < b ? (std::uint64_t(a) << 32) | b : (std::uint64_t(b) << 32) | a;
            if (!seen_pairs.insert(key).second) continue;
            pairs.emplace_back(e.target, e.selected);
        }
        if (pairs.empty()) continue;

        const EquivalenceFunction f = fit(train);
        double sum = 0.0;
        for (const auto& [c1, c2] : pairs) {
            const double d_lab = lab_distance(rgb_to_lab(c1), rgb_to_lab(c2));
            const double d_t = vec3_distance(transform_color(f, c1), transform_color(f, c2));
            sum += (d_t - d_lab) / d_lab;
        }
        split_means.push_back(sum / double(pairs.size()));
    }

    if (split_means.empty()) {
        throw std::runtime_error("validate_distance_change: insufficient color diversity "
                                 "(every split's filtered test set was empty)");
    }

    report.splits_used = int(split_means.size());
    double mean = 0.0;
    for (double v : split_means) mean += v;
    mean /= double(split_means.size());
    double var = 0.0;
    for (double v : split_means) var += (v - mean) * (v - mean);
    var /= double(split_means.size());
    report.mean_relative_change = mean;
    report.std_relative_change = std::sqrt(var);
    report.split_means = std::move(split_means);
    return report;
}

inline ValidationReport validate_distance_change(const ConfusionDataset& d, TransformKind kind,
                                                 int splits = 10, double train_fraction = 0.8,
                                                 std::uint64_t seed = 0, int hidden = 100) {
    int split_index = 0;
    return validate_distance_change_with(
        d,
        [&](const ConfusionDataset& train) {
            const auto fit_seed = derive_seed(seed, 1000 + std::uint64_t(split_index++));
            return fit_equivalence(train, kind, hidden, fit_seed);
        },
        splits, train_fraction, seed);
}

}  // namespace cvquant
