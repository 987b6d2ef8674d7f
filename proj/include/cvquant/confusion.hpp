#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cvquant/color.hpp"
#include "cvquant/rng.hpp"

namespace cvquant {

// One color-matching turn: the target shown and the specimen picked.
struct ConfusionEvent {
    std::uint64_t turn = 0;
    Rgb24 target;
    Rgb24 selected;

    bool correct() const { return target == selected; }
};

struct ConfusionDataset {
    std::string user_id;
    std::vector<ConfusionEvent> events;  // ascending by turn, unique turns

    std::size_t size() const { return events.size(); }

    double accuracy() const {
        if (events.empty()) return 0.0;
        std::size_t hits = 0;
        for (const auto& e : events) hits += e.correct();
        return double(hits) / double(events.size());
    }

    // Chronological prefix of ceil(fraction * n) events.
    ConfusionDataset prefix(double fraction) const {
        ConfusionDataset out;
        out.user_id = user_id;
        const auto k = std::size_t(std::ceil(fraction * double(events.size())));
        out.events.assign(events.begin(), events.begin() + std::min(k, events.size()));
        return out;
    }
};

struct HeuristicConfig {
    double beta = 0.5;
    std::size_t min_events = 1000;
};

struct UserScore {
    std::string user_id;
    double h = 0.0;
    double hue_mismatch_fraction = 0.0;
    double mean_lab_distance = 0.0;
    double accuracy = 0.0;
    std::size_t n = 0;
};

// ---------------------------------------------------------------------------
// CSV interchange format (UTF-8, header required):
//   turn,target_r,target_g,target_b,selected_r,selected_g,selected_b
// one row per selection event, integer fields only, rows sorted by turn.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kEventsCsvHeader =
    "turn,target_r,target_g,target_b,selected_r,selected_g,selected_b";

namespace detail {

inline std::uint64_t parse_field(std::string_view field, std::uint64_t max, std::size_t line_no,
                                 const char* what) {
    std::uint64_t value = 0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || value > max) {
        throw std::runtime_error("events csv: line " + std::to_string(line_no) + ": bad " + what +
                                 " value '" + std::string(field) + "'");
    }
    return value;
}

inline void split_csv_row(std::string_view row, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    while (true) {
        const auto comma = row.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(row.substr(start));
            return;
        }
        out.push_back(row.substr(start, comma - start));
        start = comma + 1;
    }
}

}  // namespace detail

inline ConfusionDataset load_events(std::istream& in, std::string user_id = {}) {
    ConfusionDataset out;
    out.user_id = std::move(user_id);

    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    std::vector<std::string_view> fields;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != kEventsCsvHeader) {
                throw std::runtime_error("events csv: line 1: expected header '" +
                                         std::string(kEventsCsvHeader) + "'");
            }
            saw_header = true;
            continue;
        }

        detail::split_csv_row(line, fields);
        if (fields.size() != 7) {
            throw std::runtime_error("events csv: line " + std::to_string(line_no) + ": expected 7 fields, got " +
                                     std::to_string(fields.size()));
        }

        ConfusionEvent e;
        e.turn = detail::parse_field(fields[0], UINT64_MAX, line_no, "turn");
        e.target.r = std::uint8_t(detail::parse_field(fields[1], 255, line_no, "target_r"));
        e.target.g = std::uint8_t(detail::parse_field(fields[2], 255, line_no, "target_g"));
        e.target.b = std::uint8_t(detail::parse_field(fields[3], 255, line_no, "target_b"));
        e.selected.r = std::uint8_t(detail::parse_field(fields[4], 255, line_no, "selected_r"));
        e.selected.g = std::uint8_t(detail::parse_field(fields[5], 255, line_no, "selected_g"));
        e.selected.b = std::uint8_t(detail::parse_field(fields[6], 255, line_no, "selected_b"));

        if (!out.events.empty() && e.turn <= out.events.back().turn) {
            throw std::runtime_error("events csv: line " + std::to_string(line_no) +
                                     ": turn values must be strictly increasing");
        }
        out.events.push_back(e);
    }

    if (out.events.empty()) throw std::runtime_error("events csv: no events");
    return out;
}

inline void write_events(std::ostream& out, const ConfusionDataset& d) {
    out << kEventsCsvHeader << '\n';
    for (const auto& e : d.events) {
        out << e.turn << ',' << int(e.target.r) << ',' << int(e.target.g) << ',' << int(e.target.b) << ','
            << int(e.selected.r) << ',' << int(e.selected.g) << ',' << int(e.selected.b) << '\n';
    }
}

inline std::string write_events_string(const ConfusionDataset& d) {
    std::ostringstream ss;
    write_events(ss, d);
    return ss.str();
}

// ---------------------------------------------------------------------------
// Scoring heuristic: beta-weighted sum of the cross-hue confusion fraction
// and the mean LAB distance between target and selection, over all turns.
// Correct selections contribute zero to both sums but still count toward n.
// ---------------------------------------------------------------------------

inline UserScore heuristic_score(const ConfusionDataset& d, const HeuristicConfig& cfg = {}) {
    if (d.events.empty()) throw std::invalid_argument("heuristic_score: empty dataset");

    double mismatches = 0.0;
    double distance_sum = 0.0;
    std::size_t hits = 0;
    for (const auto& e : d.events) {
        if (e.correct()) {
            ++hits;
            continue;
        }
        if (hue_bucket(e.target) != hue_bucket(e.selected)) mismatches += 1.0;
        distance_sum += lab_distance(rgb_to_lab(e.target), rgb_to_lab(e.selected));
    }

    const double n = double(d.events.size());
    UserScore s;
    s.user_id = d.user_id;
    s.hue_mismatch_fraction = mismatches / n;
    s.mean_lab_distance = distance_sum / n;
    s.h = cfg.beta * s.hue_mismatch_fraction + (1.0 - cfg.beta) * s.mean_lab_distance;
    s.accuracy = double(hits) / n;
    s.n = d.events.size();
    return s;
}

// Drops users with fewer than cfg.min_events events, scores the rest, and
// returns at most top_k of them sorted by h descending (user_id ascending on
// ties).
inline std::vector<UserScore> rank_users(const std::vector<ConfusionDataset>& datasets,
                                         const HeuristicConfig& cfg, std::size_t top_k) {
    std::vector<UserScore> scores;
    for (const auto& d : datasets) {
        if (d.events.size() < cfg.min_events) continue;
        scores.push_back(heuristic_score(d, cfg));
    }
    std::sort(scores.begin(), scores.end(), [](const UserScore& a, const UserScore& b) {
        if (a.h != b.h) return a.h > b.h;
        return a.user_id < b.user_id;
    });
    if (scores.size() > top_k) scores.resize(top_k);
    return scores;
}

// ---------------------------------------------------------------------------
// Synthetic observers. Each game turn shows a random target plus 4..9
// specimens (one of which is the target) jittered around it in LAB space;
// the jitter radius shrinks as difficulty rises. The observer sees every
// color through a dichromat projection plus Gaussian perceptual noise and
// picks the specimen closest to the target in that perceived space.
// ---------------------------------------------------------------------------

enum class ObserverModel { none, protan, deutan, tritan };

inline ObserverModel observer_model_from_string(std::string_view name) {
    if (name == "none") return ObserverModel::none;
    if (name == "protan") return ObserverModel::protan;
    if (name == "deutan") return ObserverModel::deutan;
    if (name == "tritan") return ObserverModel::tritan;
    throw std::invalid_argument("unknown observer model '" + std::string(name) + "'");
}

inline std::string_view to_string(ObserverModel m) {
    switch (m) {
        case ObserverModel::none: return "none";
        case ObserverModel::protan: return "protan";
        case ObserverModel::deutan: return "deutan";
        case ObserverModel::tritan: return "tritan";
    }
    return "none";
}

namespace detail {

// Smith-Pokorny LMS model and single-plane dichromat projections, constants
// from libDaltonLens (https://github.com/DaltonLens/libDaltonLens, public
// domain) after Vienot, Brettel & Mollon 1999. Applied in linear RGB with a
// gamut clamp. These are constants of the simulator, nothing more; the
// tritan plane in particular is a known-rough approximation.
inline constexpr std::array<double, 9> kLmsFromLinearRgb = {
    0.17882, 0.43516, 0.04119,
    0.03456, 0.27155, 0.03867,
    0.00030, 0.00184, 0.01467,
};
inline constexpr std::array<double, 9> kLinearRgbFromLms = {
    8.09444, -13.05043,  11.67206,
   -1.02485,   5.40193, -11.36147,
   -0.03653,  -0.41216,  69.35132,
};

inline std::array<double, 3> mat3_apply(const std::array<double, 9>& m, const std::array<double, 3>& v) {
    return {
        m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
        m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
        m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
    };
}

}  // namespace detail

// Projects a color onto the confusion surface of the given dichromat model.
// ObserverModel::none is the identity.
inline Rgb24 simulate_dichromat(ObserverModel model, Rgb24 c) {
    using namespace detail;
    if (model == ObserverModel::none) return c;

    const std::array<double, 3> lin = {
        srgb_to_linear(c.r / 255.0),
        srgb_to_linear(c.g / 255.0),
        srgb_to_linear(c.b / 255.0),
    };
    auto lms = mat3_apply(kLmsFromLinearRgb, lin);
    switch (model) {
        case ObserverModel::protan: lms[0] = 2.02344 * lms[1] - 2.52580 * lms[2]; break;
        case ObserverModel::deutan: lms[1] = 0.49421 * lms[0] + 1.24827 * lms[2]; break;
        case ObserverModel::tritan: lms[2] = -0.01224 * lms[0] + 0.07203 * lms[1]; break;
        case ObserverModel::none: break;
    }
    const auto out = mat3_apply(kLinearRgbFromLms, lms);
    return Rgb24{
        to_byte(255.0 * linear_to_srgb(std::clamp(out[0], 0.0, 1.0))),
        to_byte(255.0 * linear_to_srgb(std::clamp(out[1], 0.0, 1.0))),
        to_byte(255.0 * linear_to_srgb(std::clamp(out[2], 0.0, 1.0))),
    };
}

inline ConfusionDataset synthesize_observer(ObserverModel model, std::size_t turns, std::uint64_t seed,
                                            double difficulty, std::string user_id = {}) {
    if (turns < 1) throw std::invalid_argument("synthesize_observer: turns must be >= 1");
    if (!(difficulty > 0.0 && difficulty <= 1.0)) {
        throw std::invalid_argument("synthesize_observer: difficulty must be in (0, 1]");
    }

    // Specimen jitter shrinks from 48 to 6 LAB units across the difficulty
    // range; dichromat observers carry fixed perceptual noise, the identity
    // observer none (so it is always right and scores h = 0).
    const double spread = 48.0 - 42.0 * difficulty;
    const double noise_sigma = model == ObserverModel::none ? 0.0 : 2.5;

    Rng rng(seed);
    ConfusionDataset out;
    out.user_id = user_id.empty() ? std::string(to_string(model)) : std::move(user_id);
    out.events.reserve(turns);

    const auto perceived = [&](Rgb24 c) {
        Lab lab = rgb_to_lab(simulate_dichromat(model, c));
        if (noise_sigma > 0.0) {
            lab.L += rng.normal(0.0, noise_sigma);
            lab.a += rng.normal(0.0, noise_sigma);
            lab.b += rng.normal(0.0, noise_sigma);
        }
        return lab;
    };

    for (std::size_t turn = 0; turn < turns; ++turn) {
        const Rgb24 target{std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256)),
                           std::uint8_t(rng.below(256))};
        const Lab target_lab = rgb_to_lab(target);

        const int k = rng.range(4, 9);
        std::vector<Rgb24> specimens;
        specimens.reserve(std::size_t(k));
        specimens.push_back(target);
        while (specimens.size() < std::size_t(k)) {
            const Lab jittered{
                target_lab.L + rng.normal(0.0, spread),
                target_lab.a + rng.normal(0.0, spread),
                target_lab.b + rng.normal(0.0, spread),
            };
            const Rgb24 candidate = lab_to_rgb(jittered);
            if (candidate == target) continue;
            specimens.push_back(candidate);
        }

        const Lab target_seen = perceived(target);
        Rgb24 picked = specimens.front();
        double best = lab_distance(perceived(specimens.front()), target_seen);
        for (std::size_t i = 1; i < specimens.size(); ++i) {
            const double dist = lab_distance(perceived(specimens[i]), target_seen);
            if (dist < best) {
                best = dist;
                picked = specimens[i];
            }
        }

        out.events.push_back(ConfusionEvent{turn, target, picked});
    }
    return out;
}

}  // namespace cvquant
