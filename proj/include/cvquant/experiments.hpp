#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cvquant/color.hpp"
#include "cvquant/confusion.hpp"
#include "cvquant/equivalence.hpp"
#include "cvquant/png_io.hpp"
#include "cvquant/quantize.hpp"
#include "cvquant/sidecar.hpp"

namespace cvquant {

enum class PreQuantizer { median_cut, external };

inline PreQuantizer pre_quantizer_from_string(std::string_view s) {
    if (s == "median_cut") return PreQuantizer::median_cut;
    if (s == "external") return PreQuantizer::external;
    throw std::invalid_argument("unknown pre_quantizer '" + std::string(s) + "'");
}

struct ExperimentConfig {
    std::vector<std::size_t> palette_sizes{230, 204, 179, 153, 128};
    std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
    PreQuantizer pre_quantizer = PreQuantizer::median_cut;
    std::vector<std::filesystem::path> users;  // confusion event CSVs
    std::uint64_t seed = 0;

    std::vector<std::filesystem::path> images;
    std::filesystem::path out_dir = "eval-out";
    std::vector<TransformKind> delta_kinds{TransformKind::linear};
    double alpha = 0.5;               // weight used by the compression sweep
    std::size_t target_colors = 128;  // palette size for the alpha sweep
    std::vector<double> fractions{0.125, 0.25, 0.5, 0.75, 1.0};
    std::size_t top_k = 200;
    int hidden = 100;

    void validate() const {
        if (palette_sizes.empty()) throw std::invalid_argument("config: palette_sizes is empty");
        for (std::size_t i = 0; i < palette_sizes.size(); ++i) {
            if (palette_sizes[i] < 1 || palette_sizes[i] > 256) {
                throw std::invalid_argument("config: palette sizes must be in [1, 256]");
            }
            if (i > 0 && palette_sizes[i] >= palette_sizes[i - 1]) {
                throw std::invalid_argument("config: palette_sizes must be strictly decreasing");
            }
        }
        for (const double a : alphas) {
            if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("config: alphas must be in [0, 1]");
        }
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("config: alpha must be in [0, 1]");
        for (std::size_t i = 0; i < fractions.size(); ++i) {
            if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) {
                throw std::invalid_argument("config: fractions must be in (0, 1]");
            }
            if (i > 0 && fractions[i] <= fractions[i - 1]) {
                throw std::invalid_argument("config: fractions must be sorted ascending");
            }
        }
        if (target_colors < 1 || target_colors > 256) {
            throw std::invalid_argument("config: target_colors must be in [1, 256]");
        }
        if (top_k < 2) throw std::invalid_argument("config: top_k must be >= 2");
        if (hidden < 1) throw std::invalid_argument("config: hidden must be >= 1");
    }
};

struct CompressionRecord {
    std::string image_id;
    std::string user_id;
    std::string dataset_hash;
    TransformKind delta_kind = TransformKind::linear;
    std::size_t palette_size = 0;
    double alpha = 0.5;
    std::uint64_t seed = 0;
    std::uintmax_t original_bytes = 0;
    std::uintmax_t reference_bytes = 0;
    std::uintmax_t output_bytes = 0;
    double size_reduction = 0.0;                // 1 - output/reference
    double compression_ratio_vs_original = 0.0; // original/output
};

struct HueAccuracyRecord {
    HueBucket bucket;
    double specimen_accuracy = 0.0;
    double kodak_accuracy = 0.0;
    double specimen_accuracy_norm = 0.0;
    double kodak_accuracy_norm = 0.0;
};

struct HueValidationResult {
    std::vector<HueAccuracyRecord> records;
    double r_squared = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<std::string> omitted_buckets;
};

struct HistorySweepRecord {
    std::string image_id;
    double history_fraction = 1.0;
    std::size_t top_k = 200;
    double spearman_rho = 0.0;
    bool skipped = false;
    std::string note;
    // The two rankings behind rho (each a permutation of 1..top_k), kept so
    // callers can recheck rho with an independent formula.
    std::vector<double> full_ranks;
    std::vector<double> prefix_ranks;
};

struct AlphaSweepRow {
    double alpha = 1.0;
    double mean_reduction_vs_alpha1 = 0.0;
};

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

// Shortest round-trip decimal form, the same on every run of the same build.
inline std::string format_double(double v) {
    std::array<char, 64> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("pearson: need two equal-length series of >= 2 points");
    }
    const double n = double(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    const double cov = n * sxy - sx * sy;
    const double vx = n * sxx - sx * sx;
    const double vy = n * syy - sy * sy;
    if (!(vx > 0.0) || !(vy > 0.0)) throw std::invalid_argument("pearson: a series is constant");
    return cov / std::sqrt(vx * vy);
}

// Spearman's rho over two rank vectors (each a permutation of 1..k),
// computed as the Pearson correlation of the ranks.
inline double spearman_rho(const std::vector<double>& ranks_a, const std::vector<double>& ranks_b) {
    return pearson(ranks_a, ranks_b);
}

// Ordinary least squares line y = intercept + slope * x plus the squared
// correlation coefficient.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const double r = pearson(x, y);
    const double n = double(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    LineFit fit;
    fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.intercept = (sy - fit.slope * sx) / n;
    fit.r_squared = r * r;
    return fit;
}

// FNV-1a over the canonical event bytes; identifies the dataset in emitted
// tables so every row can be traced to its inputs.
inline std::string dataset_hash(const ConfusionDataset& d) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto mix = [&](std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& e : d.events) {
        mix(e.turn, 8);
        mix(pack_rgb(e.target), 4);
        mix(pack_rgb(e.selected), 4);
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

namespace detail {

inline std::string sanitize_id(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (const char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '-' || c == '_';
        out.push_back(ok ? c : '_');
    }
    return out.empty() ? std::string("user") : out;
}

inline std::string alpha_tag(double alpha) {
    std::string tag = format_double(alpha);
    for (char& c : tag) {
        if (c == '.') c = 'p';
    }
    return tag;
}

inline std::string csv_safe(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Flat key/value config file
// ---------------------------------------------------------------------------

namespace detail {

struct ConfigValue {
    std::vector<std::string> items;  // single values hold exactly one item
    bool is_array = false;
};

inline std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string unquote(const std::string& s, int line) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    if (!s.empty() && s.front() == '"') {
        throw std::runtime_error("config line " + std::to_string(line) + ": unterminated string");
    }
    return s;
}

inline std::map<std::string, ConfigValue> parse_flat_config(std::istream& in) {
    std::map<std::string, ConfigValue> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // Strip comments outside quotes.
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;

        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
        }
        if (out.count(key)) {
            throw std::runtime_error("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }

        ConfigValue cv;
        if (!value.empty() && value.front() == '[') {
            if (value.back() != ']') {
                throw std::runtime_error("config line " + std::to_string(lineno) + ": unterminated array");
            }
            cv.is_array = true;
            std::string body = value.substr(1, value.size() - 2);
            std::string item;
            bool in_quotes = false;
            for (const char c : body) {
                if (c == '"') in_quotes = !in_quotes;
                if (c == ',' && !in_quotes) {
                    const std::string t = trim(item);
                    if (!t.empty()) cv.items.push_back(unquote(t, lineno));
                    item.clear();
                } else {
                    item.push_back(c);
                }
            }
            const std::string t = trim(item);
            if (!t.empty()) cv.items.push_back(unquote(t, lineno));
        } else {
            if (value.empty()) {
                throw std::runtime_error("config line " + std::to_string(lineno) + ": empty value for '" + key + "'");
            }
            cv.items.push_back(unquote(value, lineno));
        }
        out.emplace(key, std::move(cv));
    }
    return out;
}

inline double to_double(const std::string& s, const std::string& key) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw std::runtime_error("config: key '" + key + "': '" + s + "' is not a number");
    }
    return v;
}

inline std::uint64_t to_u64(const std::string& s, const std::string& key) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw std::runtime_error("config: key '" + key + "': '" + s + "' is not a non-negative integer");
    }
    return v;
}

}  // namespace detail

// Parses the flat key = value experiment config. Recognized keys: images,
// events, palette_sizes, alphas, alpha, pre_quantizer, seed, delta_kind,
// hidden, out_dir, fractions, top_k, target_colors. Unknown keys are
// rejected so typos fail loudly.
inline ExperimentConfig parse_experiment_config(std::istream& in) {
    auto kv = detail::parse_flat_config(in);
    ExperimentConfig cfg;

    const auto take = [&](const char* key) -> const detail::ConfigValue* {
        const auto it = kv.find(key);
        if (it == kv.end()) return nullptr;
        return &it->second;
    };
    const auto single = [&](const detail::ConfigValue* cv, const char* key) -> const std::string& {
        if (cv->items.size() != 1 || cv->is_array) {
            throw std::runtime_error(std::string("config: key '") + key + "' expects a single value");
        }
        return cv->items[0];
    };

    std::set<std::string> known;
    const auto mark = [&](const char* key) {
        known.insert(key);
        return take(key);
    };

    if (const auto* cv = mark("images")) {
        cfg.images.clear();
        for (const auto& s : cv->items) cfg.images.emplace_back(s);
    }
    if (const auto* cv = mark("events")) {
        cfg.users.clear();
        for (const auto& s : cv->items) cfg.users.emplace_back(s);
    }
    if (const auto* cv = mark("palette_sizes")) {
        cfg.palette_sizes.clear();
        for (const auto& s : cv->items) cfg.palette_sizes.push_back(detail::to_u64(s, "palette_sizes"));
    }
    if (const auto* cv = mark("alphas")) {
        cfg.alphas.clear();
        for (const auto& s : cv->items) cfg.alphas.push_back(detail::to_double(s, "alphas"));
    }
    if (const auto* cv = mark("alpha")) cfg.alpha = detail::to_double(single(cv, "alpha"), "alpha");
    if (const auto* cv = mark("pre_quantizer")) {
        cfg.pre_quantizer = pre_quantizer_from_string(single(cv, "pre_quantizer"));
    }
    if (const auto* cv = mark("seed")) cfg.seed = detail::to_u64(single(cv, "seed"), "seed");
    if (const auto* cv = mark("delta_kind")) {
        const std::string& s = single(cv, "delta_kind");
        cfg.delta_kinds.clear();
        if (s == "both") {
            cfg.delta_kinds = {TransformKind::linear, TransformKind::nonlinear};
        } else {
            cfg.delta_kinds = {transform_kind_from_string(s)};
        }
    }
    if (const auto* cv = mark("hidden")) cfg.hidden = int(detail::to_u64(single(cv, "hidden"), "hidden"));
    if (const auto* cv = mark("out_dir")) cfg.out_dir = single(cv, "out_dir");
    if (const auto* cv = mark("fractions")) {
        cfg.fractions.clear();
        for (const auto& s : cv->items) cfg.fractions.push_back(detail::to_double(s, "fractions"));
    }
    if (const auto* cv = mark("top_k")) cfg.top_k = detail::to_u64(single(cv, "top_k"), "top_k");
    if (const auto* cv = mark("target_colors")) {
        cfg.target_colors = detail::to_u64(single(cv, "target_colors"), "target_colors");
    }

    for (const auto& [key, value] : kv) {
        if (!known.count(key)) throw std::runtime_error("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    try {
        return parse_experiment_config(in);
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

// Directories expand to their *.png files sorted by name; plain files pass
// through unchanged.
inline std::vector<std::filesystem::path> resolve_image_list(
    const std::vector<std::filesystem::path>& entries) {
    std::vector<std::filesystem::path> out;
    for (const auto& entry : entries) {
        if (std::filesystem::is_directory(entry)) {
            std::vector<std::filesystem::path> found;
            for (const auto& de : std::filesystem::directory_iterator(entry)) {
                if (de.is_regular_file() && de.path().extension() == ".png") found.push_back(de.path());
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else {
            out.push_back(entry);
        }
    }
    if (out.empty()) throw std::runtime_error("config: no input images found");
    return out;
}

// ---------------------------------------------------------------------------
// Experiment drivers
// ---------------------------------------------------------------------------

namespace detail {

inline ImageBuffer pre_quantize(const ExperimentConfig& cfg, const ImageBuffer& img) {
    return cfg.pre_quantizer == PreQuantizer::median_cut ? median_cut(img, 256) : img;
}

inline EquivalenceFunction fit_for(const ExperimentConfig& cfg, const ConfusionDataset& d,
                                   TransformKind kind) {
    return fit_equivalence(d, kind, cfg.hidden, cfg.seed);
}

}  // namespace detail

// Full compression sweep: for every (image, palette size, transform kind),
// pre-quantize, build the same-palette-size reference with the pre-quantizer
// alone, apply the merger plan, write both PNGs plus the sidecar under
// cfg.out_dir, and record the sizes.
inline std::vector<CompressionRecord> run_compress(const ExperimentConfig& cfg,
                                                   const std::vector<std::filesystem::path>& images,
                                                   const ConfusionDataset& dataset) {
    std::filesystem::create_directories(cfg.out_dir);
    const std::string hash = dataset_hash(dataset);
    const std::string user_tag = detail::sanitize_id(dataset.user_id);

    std::vector<std::pair<TransformKind, EquivalenceFunction>> fits;
    for (const TransformKind kind : cfg.delta_kinds) {
        fits.emplace_back(kind, detail::fit_for(cfg, dataset, kind));
    }

    std::vector<CompressionRecord> records;
    for (const auto& image_path : images) {
        const std::string stem = image_path.stem().string();
        const auto original_bytes = measure(image_path).bytes;
        const ImageBuffer img = read_png(image_path);
        const ImageBuffer pre = detail::pre_quantize(cfg, img);

        for (const std::size_t n : cfg.palette_sizes) {
            // Reference: the pre-quantizer alone taken to the same final size.
            // Externally pre-quantized inputs cannot be re-targeted, so the
            // input itself is the reference.
            std::uintmax_t reference_bytes = 0;
            if (cfg.pre_quantizer == PreQuantizer::median_cut) {
                const ImageBuffer ref = median_cut(pre, n);
                const auto ref_path = cfg.out_dir / (stem + "_n" + std::to_string(n) + "_ref.png");
                reference_bytes = write_indexed_png(ref, ref_path).bytes;
            } else {
                reference_bytes = original_bytes;
            }

            for (const auto& [kind, equivalence] : fits) {
                try {
                    QuantizeConfig qc;
                    qc.target_colors = n;
                    qc.alpha = cfg.alpha;
                    qc.equivalence = equivalence;
                    const MergerPlan plan = plan_mergers(pre, qc);
                    auto [out_img, sidecar] = recolor(pre, plan);

                    const std::string base = stem + "_" + user_tag + "_" + std::string(to_string(kind)) +
                                             "_n" + std::to_string(n);
                    const auto out_path = cfg.out_dir / (base + ".png");
                    const auto report = write_indexed_png(out_img, out_path);
                    save_sidecar(cfg.out_dir / (base + ".dqdm"), sidecar);

                    CompressionRecord rec;
                    rec.image_id = stem;
                    rec.user_id = dataset.user_id;
                    rec.dataset_hash = hash;
                    rec.delta_kind = kind;
                    rec.palette_size = n;
                    rec.alpha = cfg.alpha;
                    rec.seed = cfg.seed;
                    rec.original_bytes = original_bytes;
                    rec.reference_bytes = reference_bytes;
                    rec.output_bytes = report.bytes;
                    rec.size_reduction = 1.0 - double(report.bytes) / double(reference_bytes);
                    rec.compression_ratio_vs_original = double(original_bytes) / double(report.bytes);
                    records.push_back(std::move(rec));
                } catch (const std::exception& e) {
                    throw std::runtime_error("compress: image=" + stem + " user=" + dataset.user_id +
                                             " n=" + std::to_string(n) + ": " + e.what());
                }
            }
        }
    }
    return records;
}

// Per-chromatic-bucket pixel keep rates: across every configured palette
// size, how many pixels of each hue bucket the alpha = 1 merger plan leaves
// untouched. Achromatic pixels land in the sentinel bucket and are not
// counted.
struct HueKeepCounts {
    std::array<std::size_t, 10> total{};
    std::array<std::size_t, 10> kept{};
};

inline HueKeepCounts hue_pixel_keep_counts(const ExperimentConfig& cfg,
                                           const std::vector<std::filesystem::path>& images,
                                           const EquivalenceFunction& equivalence) {
    HueKeepCounts counts;
    for (const auto& image_path : images) {
        const ImageBuffer pre = detail::pre_quantize(cfg, read_png(image_path));
        const auto [palette, hist] = extract_palette(pre);
        for (const std::size_t n : cfg.palette_sizes) {
            QuantizeConfig qc;
            qc.target_colors = n;
            qc.alpha = 1.0;
            qc.equivalence = equivalence;
            const MergerPlan plan = plan_mergers(pre, qc);
            for (const Rgb24& c : palette.colors) {
                const HueBucket b = hue_bucket(c);
                if (!b.chromatic()) continue;
                const std::size_t pixels = hist.count(c);
                counts.total[std::size_t(b.index)] += pixels;
                if (!plan.is_removed(c)) counts.kept[std::size_t(b.index)] += pixels;
            }
        }
    }
    return counts;
}

// Hue-bucket validation: per-bucket selection accuracy from the game events
// against per-bucket keep rate (pixels not repainted) from quantizing the
// benchmark images at alpha = 1, both min-max normalized, with an OLS line
// fit over the buckets present on both sides. Achromatic pixels and targets
// sit in the sentinel bucket and are left out of the regression.
inline HueValidationResult run_hue_validation(const ExperimentConfig& cfg,
                                              const std::vector<std::filesystem::path>& images,
                                              const ConfusionDataset& dataset, TransformKind kind) {
    constexpr int kBuckets = 10;
    std::array<std::size_t, kBuckets> event_total{};
    std::array<std::size_t, kBuckets> event_correct{};
    for (const auto& e : dataset.events) {
        const HueBucket b = hue_bucket(e.target);
        if (!b.chromatic()) continue;
        ++event_total[std::size_t(b.index)];
        if (e.correct()) ++event_correct[std::size_t(b.index)];
    }

    const EquivalenceFunction equivalence = detail::fit_for(cfg, dataset, kind);
    const HueKeepCounts counts = hue_pixel_keep_counts(cfg, images, equivalence);
    const auto& pixel_total = counts.total;
    const auto& pixel_kept = counts.kept;

    HueValidationResult result;
    std::vector<int> included;
    for (int b = 0; b < kBuckets; ++b) {
        if (event_total[std::size_t(b)] > 0 && pixel_total[std::size_t(b)] > 0) {
            included.push_back(b);
        } else {
            result.omitted_buckets.emplace_back(HueBucket{b}.label());
        }
    }
    if (included.size() < 2) {
        throw std::runtime_error("hue validation: fewer than 2 hue buckets have both events and pixels; "
                                 "min-max normalization is degenerate");
    }

    std::vector<double> spec_acc, kodak_acc;
    for (const int b : included) {
        spec_acc.push_back(double(event_correct[std::size_t(b)]) / double(event_total[std::size_t(b)]));
        kodak_acc.push_back(double(pixel_kept[std::size_t(b)]) / double(pixel_total[std::size_t(b)]));
    }
    const auto normalize = [](std::vector<double> v, const char* axis) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        if (!(*hi > *lo)) {
            throw std::runtime_error(std::string("hue validation: ") + axis +
                                     " accuracies are all equal; min-max normalization is degenerate");
        }
        for (double& x : v) x = (x - *lo) / (*hi - *lo);
        return v;
    };
    const std::vector<double> spec_norm = normalize(spec_acc, "selection");
    const std::vector<double> kodak_norm = normalize(kodak_acc, "image keep-rate");

    const LineFit line = fit_line(spec_norm, kodak_norm);
    result.r_squared = line.r_squared;
    result.slope = line.slope;
    result.intercept = line.intercept;
    for (std::size_t i = 0; i < included.size(); ++i) {
        HueAccuracyRecord rec;
        rec.bucket = HueBucket{included[i]};
        rec.specimen_accuracy = spec_acc[i];
        rec.kodak_accuracy = kodak_acc[i];
        rec.specimen_accuracy_norm = spec_norm[i];
        rec.kodak_accuracy_norm = kodak_norm[i];
        result.records.push_back(rec);
    }
    return result;
}

// Ranks the top_k pairs of `full` among themselves under the ordering of
// `alternative` (which must rank the same candidate pairs, normally the
// whole palette's pairs under a different transform) and returns the two
// rank permutations of 1..k plus Spearman's rho between them.
struct RankComparison {
    std::vector<double> full_ranks;
    std::vector<double> alt_ranks;
    double rho = 0.0;
};

inline RankComparison compare_rankings(const std::vector<MergerCandidate>& full,
                                       const std::vector<MergerCandidate>& alternative,
                                       std::size_t top_k) {
    const std::size_t k = std::min(top_k, full.size());
    if (k < 2) throw std::invalid_argument("compare_rankings: need at least 2 candidates");

    std::unordered_map<std::uint64_t, std::size_t> alt_position;
    alt_position.reserve(alternative.size());
    for (std::size_t i = 0; i < alternative.size(); ++i) {
        const std::uint64_t key =
            (std::uint64_t(pack_rgb(alternative[i].from)) << 32) | pack_rgb(alternative[i].to);
        alt_position.emplace(key, i);
    }

    std::vector<std::pair<std::size_t, std::size_t>> by_alt(k);  // (alt position, full rank index)
    for (std::size_t i = 0; i < k; ++i) {
        const std::uint64_t key =
            (std::uint64_t(pack_rgb(full[i].from)) << 32) | pack_rgb(full[i].to);
        const auto it = alt_position.find(key);
        if (it == alt_position.end()) {
            throw std::invalid_argument("compare_rankings: alternative ranking is missing a pair");
        }
        by_alt[i] = {it->second, i};
    }
    std::sort(by_alt.begin(), by_alt.end());

    RankComparison cmp;
    cmp.full_ranks.resize(k);
    cmp.alt_ranks.resize(k);
    for (std::size_t r = 0; r < k; ++r) {
        const std::size_t full_index = by_alt[r].second;
        cmp.full_ranks[full_index] = double(full_index + 1);
        cmp.alt_ranks[full_index] = double(r + 1);
    }
    cmp.rho = spearman_rho(cmp.full_ranks, cmp.alt_ranks);
    return cmp;
}

// Limited-history sweep: ranks the full-history top-k merger candidates
// under a transform fitted on each chronological prefix and reports
// Spearman's rho between the two rankings. The fit seed is held fixed
// across fractions so ranking changes come from the data alone.
inline std::vector<HistorySweepRecord> run_history_sweep(const ExperimentConfig& cfg,
                                                         const std::filesystem::path& image_path,
                                                         const ConfusionDataset& dataset,
                                                         TransformKind kind,
                                                         const std::vector<double>& fractions) {
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) {
            throw std::invalid_argument("history sweep: fractions must be in (0, 1]");
        }
        if (i > 0 && fractions[i] <= fractions[i - 1]) {
            throw std::invalid_argument("history sweep: fractions must be sorted ascending");
        }
    }

    const std::string stem = image_path.stem().string();
    const ImageBuffer pre = detail::pre_quantize(cfg, read_png(image_path));
    const auto [palette, hist] = extract_palette(pre);

    const EquivalenceFunction full_fit = detail::fit_for(cfg, dataset, kind);
    const auto full_candidates = score_candidates(palette, hist, 1.0, [&](Rgb24 a, Rgb24 b) {
        return delta_u(full_fit, a, b);
    });
    const std::size_t k = std::min(cfg.top_k, full_candidates.size());
    if (k < 2) throw std::runtime_error("history sweep: fewer than 2 candidate pairs");

    std::vector<HistorySweepRecord> records;
    for (const double fraction : fractions) {
        HistorySweepRecord rec;
        rec.image_id = stem;
        rec.history_fraction = fraction;
        rec.top_k = k;

        const ConfusionDataset prefix = dataset.prefix(fraction);
        EquivalenceFunction prefix_fit;
        try {
            prefix_fit = detail::fit_for(cfg, prefix, kind);
        } catch (const std::exception& e) {
            rec.skipped = true;
            rec.note = e.what();
            records.push_back(std::move(rec));
            continue;
        }

        const auto prefix_candidates = score_candidates(palette, hist, 1.0, [&](Rgb24 a, Rgb24 b) {
            return delta_u(prefix_fit, a, b);
        });
        RankComparison cmp = compare_rankings(full_candidates, prefix_candidates, k);
        rec.spearman_rho = cmp.rho;
        rec.full_ranks = std::move(cmp.full_ranks);
        rec.prefix_ranks = std::move(cmp.alt_ranks);
        records.push_back(std::move(rec));
    }
    return records;
}

// Alpha sweep at a fixed palette size: mean size change of each alpha's
// output against the alpha = 1 output of the same image.
inline std::vector<AlphaSweepRow> run_alpha_sweep(const ExperimentConfig& cfg,
                                                  const std::vector<std::filesystem::path>& images,
                                                  const ConfusionDataset& dataset, TransformKind kind,
                                                  std::size_t n) {
    if (std::find(cfg.alphas.begin(), cfg.alphas.end(), 1.0) == cfg.alphas.end()) {
        throw std::invalid_argument("alpha sweep: alphas must include 1.0 (the baseline)");
    }
    std::filesystem::create_directories(cfg.out_dir);
    const std::string user_tag = detail::sanitize_id(dataset.user_id);
    const EquivalenceFunction equivalence = detail::fit_for(cfg, dataset, kind);

    // bytes[image][alpha index]
    std::vector<std::vector<std::uintmax_t>> bytes(images.size(),
                                                   std::vector<std::uintmax_t>(cfg.alphas.size(), 0));
    for (std::size_t ii = 0; ii < images.size(); ++ii) {
        const std::string stem = images[ii].stem().string();
        const ImageBuffer pre = detail::pre_quantize(cfg, read_png(images[ii]));
        for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai) {
            QuantizeConfig qc;
            qc.target_colors = n;
            qc.alpha = cfg.alphas[ai];
            qc.equivalence = equivalence;
            const MergerPlan plan = plan_mergers(pre, qc);
            const ImageBuffer out_img = recolor(pre, plan).first;
            const auto out_path = cfg.out_dir / (stem + "_" + user_tag + "_" + std::string(to_string(kind)) +
                                                 "_n" + std::to_string(n) + "_a" +
                                                 detail::alpha_tag(cfg.alphas[ai]) + ".png");
            bytes[ii][ai] = write_indexed_png(out_img, out_path).bytes;
        }
    }

    const std::size_t baseline =
        std::size_t(std::find(cfg.alphas.begin(), cfg.alphas.end(), 1.0) - cfg.alphas.begin());
    std::vector<AlphaSweepRow> rows;
    for (std::size_t ai = 0; ai < cfg.alphas.size(); ++ai) {
        double sum = 0.0;
        for (std::size_t ii = 0; ii < images.size(); ++ii) {
            sum += 1.0 - double(bytes[ii][ai]) / double(bytes[ii][baseline]);
        }
        rows.push_back({cfg.alphas[ai], sum / double(images.size())});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

inline void write_compression_csv(std::ostream& out, const std::vector<CompressionRecord>& records,
                                  bool header = true) {
    if (header) {
        out << "image,user,dataset_hash,delta_kind,palette_size,alpha,seed,original_bytes,"
               "reference_bytes,output_bytes,size_reduction,compression_ratio_vs_original\n";
    }
    for (const auto& r : records) {
        out << detail::csv_safe(r.image_id) << ',' << detail::csv_safe(r.user_id) << ','
            << r.dataset_hash << ',' << to_string(r.delta_kind) << ',' << r.palette_size << ','
            << format_double(r.alpha) << ',' << r.seed << ',' << r.original_bytes << ','
            << r.reference_bytes << ',' << r.output_bytes << ',' << format_double(r.size_reduction)
            << ',' << format_double(r.compression_ratio_vs_original) << '\n';
    }
}

inline void write_hue_csv(std::ostream& out, const HueValidationResult& result, TransformKind kind,
                          std::uint64_t seed, const std::string& hash, bool header = true) {
    if (header) {
        out << "bucket,specimen_accuracy,kodak_accuracy,specimen_accuracy_norm,kodak_accuracy_norm,"
               "r_squared,delta_kind,seed,dataset_hash\n";
    }
    for (const auto& r : result.records) {
        out << r.bucket.label() << ',' << format_double(r.specimen_accuracy) << ','
            << format_double(r.kodak_accuracy) << ',' << format_double(r.specimen_accuracy_norm) << ','
            << format_double(r.kodak_accuracy_norm) << ',' << format_double(result.r_squared) << ','
            << to_string(kind) << ',' << seed << ',' << hash << '\n';
    }
}

inline void write_history_csv(std::ostream& out, const std::vector<HistorySweepRecord>& records,
                              TransformKind kind, std::uint64_t seed, const std::string& hash,
                              bool header = true) {
    if (header) {
        out << "image,history_fraction,top_k,spearman_rho,skipped,note,delta_kind,seed,dataset_hash\n";
    }
    for (const auto& r : records) {
        out << detail::csv_safe(r.image_id) << ',' << format_double(r.history_fraction) << ','
            << r.top_k << ',' << (r.skipped ? "" : format_double(r.spearman_rho)) << ','
            << (r.skipped ? "1" : "0") << ',' << detail::csv_safe(r.note) << ',' << to_string(kind)
            << ',' << seed << ',' << hash << '\n';
    }
}

inline void write_alpha_csv(std::ostream& out, const std::vector<AlphaSweepRow>& rows,
                            std::size_t palette_size, TransformKind kind, std::uint64_t seed,
                            const std::string& hash, bool header = true) {
    if (header) {
        out << "alpha,mean_size_reduction_vs_alpha1,palette_size,delta_kind,seed,dataset_hash\n";
    }
    for (const auto& r : rows) {
        out << format_double(r.alpha) << ',' << format_double(r.mean_reduction_vs_alpha1) << ','
            << palette_size << ',' << to_string(kind) << ',' << seed << ',' << hash << '\n';
    }
}

}  // namespace cvquant
