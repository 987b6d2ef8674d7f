#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cvquant/color.hpp"
#include "cvquant/equivalence.hpp"
#include "cvquant/image.hpp"

namespace cvquant {

// Distinct image colors in first-occurrence scan order.
struct Palette {
    std::vector<Rgb24> colors;
    std::size_t size() const { return colors.size(); }
};

// Pixel counts keyed by packed color; keys iterate in (r, g, b) order.
struct PaletteHistogram {
    std::map<std::uint32_t, std::size_t> counts;

    std::size_t count(Rgb24 c) const {
        const auto it = counts.find(pack_rgb(c));
        return it == counts.end() ? 0 : it->second;
    }
    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& [k, v] : counts) n += v;
        return n;
    }
};

struct QuantizeConfig {
    std::size_t target_colors = 128;
    double alpha = 0.5;
    EquivalenceFunction equivalence;
};

// One ordered merger candidate: removing `from` repaints it as `to`.
struct MergerCandidate {
    Rgb24 from;
    Rgb24 to;
    double score = 0.0;
};

struct MergerPlan {
    // Transitively closed map: every removed color points at a surviving one.
    std::map<std::uint32_t, Rgb24> mergers;
    std::vector<Rgb24> removed;  // keys of mergers, in (r, g, b) order
    // Full candidate list in greedy evaluation order (score descending,
    // ties by (from, to) lexicographic), kept for diagnostics and the
    // limited-history ranking experiments.
    std::vector<MergerCandidate> candidate_ranking;

    bool is_removed(Rgb24 c) const { return mergers.count(pack_rgb(c)) != 0; }
    Rgb24 map_color(Rgb24 c) const {
        const auto it = mergers.find(pack_rgb(c));
        return it == mergers.end() ? c : it->second;
    }
};

// Reversibility record: for every repainted pixel, which original color it
// had. Entries are kept in (r, g, b) order of the original color with the
// indices of each entry sorted ascending.
struct DequantSidecar {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<std::pair<Rgb24, std::vector<std::uint32_t>>> entries;
};

inline std::pair<Palette, PaletteHistogram> extract_palette(const ImageBuffer& img) {
    if (img.empty()) throw std::invalid_argument("extract_palette: empty image");
    Palette palette;
    PaletteHistogram hist;
    for (const Rgb24& p : img.pixels) {
        auto [it, inserted] = hist.counts.try_emplace(pack_rgb(p), 0);
        if (inserted) palette.colors.push_back(p);
        ++it->second;
    }
    return {std::move(palette), std::move(hist)};
}

// ---------------------------------------------------------------------------
// Median-cut pre-quantizer
// ---------------------------------------------------------------------------

namespace detail {

struct ColorWeight {
    Rgb24 color;
    std::size_t pixels;
};

struct CutBox {
    std::vector<ColorWeight> colors;  // kept sorted lexicographically

    int widest_channel(int& range_out) const {
        int lo[3] = {255, 255, 255};
        int hi[3] = {0, 0, 0};
        for (const auto& cw : colors) {
            const int ch[3] = {cw.color.r, cw.color.g, cw.color.b};
            for (int i = 0; i < 3; ++i) {
                lo[i] = std::min(lo[i], ch[i]);
                hi[i] = std::max(hi[i], ch[i]);
            }
        }
        int best = 0;
        range_out = hi[0] - lo[0];
        for (int i = 1; i < 3; ++i) {
            if (hi[i] - lo[i] > range_out) {
                range_out = hi[i] - lo[i];
                best = i;
            }
        }
        return best;
    }

    Rgb24 representative() const {
        double sum[3] = {0, 0, 0};
        double weight = 0;
        for (const auto& cw : colors) {
            sum[0] += double(cw.color.r) * double(cw.pixels);
            sum[1] += double(cw.color.g) * double(cw.pixels);
            sum[2] += double(cw.color.b) * double(cw.pixels);
            weight += double(cw.pixels);
        }
        const auto round_channel = [&](double s) {
            return std::uint8_t(std::lround(s / weight));
        };
        return Rgb24{round_channel(sum[0]), round_channel(sum[1]), round_channel(sum[2])};
    }
};

inline int channel_of(Rgb24 c, int ch) { return ch == 0 ? c.r : ch == 1 ? c.g : c.b; }

}  // namespace detail

// Recursive median-cut over the distinct colors: repeatedly split the box
// whose colors span the largest single-channel range (ties go to the
// earliest-created box) at the median of its distinct colors sorted by that
// channel (ties by full (r, g, b) order), then repaint every pixel with its
// box's pixel-weighted rounded mean. Images with <= k distinct colors pass
// through unchanged.
inline ImageBuffer median_cut(const ImageBuffer& img, std::size_t k) {
    if (k < 1) throw std::invalid_argument("median_cut: k must be >= 1");
    if (img.empty()) throw std::invalid_argument("median_cut: empty image");

    auto [palette, hist] = extract_palette(img);
    if (palette.size() <= k) return img;

    std::vector<detail::CutBox> boxes;
    boxes.reserve(k);
    {
        detail::CutBox root;
        root.colors.reserve(hist.counts.size());
        for (const auto& [key, n] : hist.counts) root.colors.push_back({unpack_rgb(key), n});
        boxes.push_back(std::move(root));
    }

    while (boxes.size() < k) {
        std::size_t best_box = 0;
        int best_range = -1;
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            if (boxes[i].colors.size() < 2) continue;
            int range = 0;
            boxes[i].widest_channel(range);
            if (range > best_range) {
                best_range = range;
                best_box = i;
            }
        }
        if (best_range < 0) break;  // every box is a single color

        detail::CutBox& box = boxes[best_box];
        int range = 0;
        const int ch = box.widest_channel(range);
        std::sort(box.colors.begin(), box.colors.end(),
                  [ch](const detail::ColorWeight& a, const detail::ColorWeight& b) {
                      const int ca = detail::channel_of(a.color, ch);
                      const int cb = detail::channel_of(b.color, ch);
                      if (ca != cb) return ca < cb;
                      return a.color < b.color;
                  });
        const std::size_t mid = box.colors.size() / 2;
        detail::CutBox upper;
        upper.colors.assign(box.colors.begin() + long(mid), box.colors.end());
        box.colors.resize(mid);
        boxes.push_back(std::move(upper));
    }

    std::unordered_map<std::uint32_t, Rgb24> remap;
    remap.reserve(palette.size());
    for (const auto& box : boxes) {
        const Rgb24 rep = box.representative();
        for (const auto& cw : box.colors) remap.emplace(pack_rgb(cw.color), rep);
    }

    ImageBuffer out = img;
    for (Rgb24& p : out.pixels) p = remap.at(pack_rgb(p));
    return out;
}

// ---------------------------------------------------------------------------
// Merger scoring and the greedy plan
// ---------------------------------------------------------------------------

// Weighted merger score for removing c_i in favor of c_j: alpha weights the
// normalized confusability of the pair against the normalized pixel count
// of the removed color. Both normalizers range over the whole input palette
// and stay frozen for the greedy pass.
inline double f_color(const QuantizeConfig& cfg, Rgb24 c_i, Rgb24 c_j, const PaletteHistogram& h,
                      double max_delta, std::size_t max_pixels) {
    const double confusability = delta_u(cfg.equivalence, c_i, c_j) / max_delta;
    const double population = double(h.count(c_i)) / double(max_pixels);
    return cfg.alpha * confusability + (1.0 - cfg.alpha) * population;
}

// Scores every ordered pair of distinct palette colors and sorts descending
// by score, ties broken by (from, to) lexicographic order. delta is any
// symmetric positive pair scorer (normally delta_u of a fitted transform).
template <typename DeltaFn>
std::vector<MergerCandidate> score_candidates(const Palette& palette, const PaletteHistogram& hist,
                                              double alpha, DeltaFn&& delta) {
    const std::size_t m = palette.size();
    if (m < 2) return {};

    std::vector<std::vector<double>> pair_delta(m, std::vector<double>(m, 0.0));
    double max_delta = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const double d = delta(palette.colors[i], palette.colors[j]);
            pair_delta[i][j] = d;
            pair_delta[j][i] = d;
            max_delta = std::max(max_delta, d);
        }
    }
    if (!(max_delta > 0.0)) throw std::runtime_error("score_candidates: delta is zero on every pair");

    std::size_t max_pixels = 0;
    for (const Rgb24& c : palette.colors) max_pixels = std::max(max_pixels, hist.count(c));
    if (max_pixels == 0) throw std::runtime_error("score_candidates: histogram has no palette pixels");

    std::vector<MergerCandidate> out;
    out.reserve(m * (m - 1));
    for (std::size_t i = 0; i < m; ++i) {
        const double population = double(hist.count(palette.colors[i])) / double(max_pixels);
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) continue;
            const double score = alpha * (pair_delta[i][j] / max_delta) + (1.0 - alpha) * population;
            out.push_back({palette.colors[i], palette.colors[j], score});
        }
    }
    std::sort(out.begin(), out.end(), [](const MergerCandidate& a, const MergerCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.from != b.from) return a.from < b.from;
        return a.to < b.to;
    });
    return out;
}

// Greedy pass shared by plan_mergers and the fixture tests that inject a
// hand-built delta table.
template <typename DeltaFn>
MergerPlan plan_mergers_with(const ImageBuffer& img, std::size_t target_colors, double alpha,
                             DeltaFn&& delta) {
    if (target_colors < 1) throw std::invalid_argument("plan_mergers: target must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("plan_mergers: alpha must be in [0, 1]");

    const auto [palette, hist] = extract_palette(img);
    if (target_colors > palette.size()) {
        throw std::invalid_argument("plan_mergers: target exceeds palette (" +
                                    std::to_string(target_colors) + " > " +
                                    std::to_string(palette.size()) + ")");
    }

    MergerPlan plan;
    if (target_colors < palette.size()) {
        plan.candidate_ranking = score_candidates(palette, hist, alpha, delta);
    }

    // Raw accepted links; chains are resolved after the pass.
    std::map<std::uint32_t, Rgb24> links;
    std::size_t survivors = palette.size();
    for (const MergerCandidate& cand : plan.candidate_ranking) {
        if (survivors == target_colors) break;
        if (links.count(pack_rgb(cand.from))) continue;  // source already removed

        // Walking the links from the destination must not lead back to the
        // source, otherwise the closure would cycle.
        Rgb24 walk = cand.to;
        bool cycles = false;
        while (true) {
            if (walk == cand.from) {
                cycles = true;
                break;
            }
            const auto it = links.find(pack_rgb(walk));
            if (it == links.end()) break;
            walk = it->second;
        }
        if (cycles) continue;

        links.emplace(pack_rgb(cand.from), cand.to);
        --survivors;
    }
    if (survivors != target_colors) {
        throw std::runtime_error("plan_mergers: greedy pass ended with " + std::to_string(survivors) +
                                 " colors, expected " + std::to_string(target_colors));
    }

    for (const auto& [key, to] : links) {
        Rgb24 dest = to;
        while (true) {
            const auto it = links.find(pack_rgb(dest));
            if (it == links.end()) break;
            dest = it->second;
        }
        plan.mergers.emplace(key, dest);
        plan.removed.push_back(unpack_rgb(key));
    }
    return plan;
}

inline MergerPlan plan_mergers(const ImageBuffer& img, const QuantizeConfig& cfg) {
    return plan_mergers_with(img, cfg.target_colors, cfg.alpha, [&](Rgb24 a, Rgb24 b) {
        return delta_u(cfg.equivalence, a, b);
    });
}

// Repaints every pixel whose color the plan removes and records the original
// color of each repainted pixel in the sidecar.
inline std::pair<ImageBuffer, DequantSidecar> recolor(const ImageBuffer& img, const MergerPlan& plan) {
    DequantSidecar sidecar;
    sidecar.width = std::uint32_t(img.width);
    sidecar.height = std::uint32_t(img.height);

    std::map<std::uint32_t, std::vector<std::uint32_t>> touched;
    ImageBuffer out = img;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        const auto it = plan.mergers.find(pack_rgb(out.pixels[i]));
        if (it == plan.mergers.end()) continue;
        touched[pack_rgb(out.pixels[i])].push_back(std::uint32_t(i));
        out.pixels[i] = it->second;
    }

    sidecar.entries.reserve(touched.size());
    for (auto& [key, indices] : touched) {
        sidecar.entries.emplace_back(unpack_rgb(key), std::move(indices));
    }
    return {std::move(out), std::move(sidecar)};
}

// Restores the pre-quantized image by repainting every recorded index with
// its original color.
inline ImageBuffer dequantize(const ImageBuffer& img, const DequantSidecar& sidecar) {
    if (sidecar.width != img.width || sidecar.height != img.height) {
        throw std::invalid_argument("dequantize: sidecar dimensions do not match image");
    }
    const std::size_t n = img.pixel_count();
    std::vector<bool> seen(n, false);
    ImageBuffer out = img;
    for (const auto& [color, indices] : sidecar.entries) {
        for (const std::uint32_t idx : indices) {
            if (idx >= n) throw std::runtime_error("corrupt sidecar: pixel index out of range");
            if (seen[idx]) throw std::runtime_error("corrupt sidecar: duplicate pixel index");
            seen[idx] = true;
            out.pixels[idx] = color;
        }
    }
    return out;
}

}  // namespace cvquant
