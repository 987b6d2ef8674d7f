#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cvquant/cvquant.hpp"

namespace fs = std::filesystem;

namespace {

cvquant::ConfusionDataset load_dataset(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return cvquant::load_events(in, path.stem().string());
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

std::vector<fs::path> list_event_files(const fs::path& entry) {
    std::vector<fs::path> out;
    if (fs::is_directory(entry)) {
        for (const auto& de : fs::directory_iterator(entry)) {
            if (de.is_regular_file() && de.path().extension() == ".csv") out.push_back(de.path());
        }
        std::sort(out.begin(), out.end());
    } else {
        out.push_back(entry);
    }
    if (out.empty()) throw std::runtime_error("no event CSVs found under " + entry.string());
    return out;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

int run_gen_synthetic(const std::string& model, std::uint64_t turns, std::uint64_t seed,
                      double difficulty, const fs::path& out_path) {
    const auto dataset = cvquant::synthesize_observer(cvquant::observer_model_from_string(model),
                                                      turns, seed, difficulty,
                                                      out_path.stem().string());
    auto out = open_out(out_path);
    cvquant::write_events(out, dataset);
    std::cout << "wrote " << dataset.events.size() << " events for " << dataset.user_id << " (accuracy "
              << cvquant::format_double(dataset.accuracy()) << ") to " << out_path.string() << "\n";
    return 0;
}

int run_rank_users(const fs::path& events_entry, double beta, std::size_t min_events,
                   std::size_t top) {
    std::vector<cvquant::ConfusionDataset> datasets;
    for (const auto& path : list_event_files(events_entry)) datasets.push_back(load_dataset(path));

    cvquant::HeuristicConfig cfg;
    cfg.beta = beta;
    cfg.min_events = min_events;
    const auto scores = cvquant::rank_users(datasets, cfg, top);

    std::cout << "user,h,hue_mismatch_fraction,mean_lab_distance,accuracy,events\n";
    for (const auto& s : scores) {
        std::cout << s.user_id << ',' << cvquant::format_double(s.h) << ','
                  << cvquant::format_double(s.hue_mismatch_fraction) << ','
                  << cvquant::format_double(s.mean_lab_distance) << ','
                  << cvquant::format_double(s.accuracy) << ',' << s.n << '\n';
    }
    return 0;
}

int run_fit(const fs::path& events_path, const std::string& kind, int hidden, std::uint64_t seed,
            const fs::path& out_path) {
    const auto dataset = load_dataset(events_path);
    const auto f = cvquant::fit_equivalence(dataset, cvquant::transform_kind_from_string(kind),
                                            hidden, seed);
    cvquant::save_profile(out_path, f);
    std::cout << "fitted " << kind << " transform on " << dataset.events.size() << " events, wrote "
              << out_path.string() << "\n";
    return 0;
}

int run_quantize(const fs::path& image_path, const fs::path& profile_path, std::size_t colors,
                 double alpha, const fs::path& out_path, const fs::path& sidecar_path) {
    std::vector<std::string> warnings;
    cvquant::ImageBuffer img = cvquant::read_png(image_path, &warnings);
    for (const auto& w : warnings) std::cerr << w << "\n";

    const auto distinct = cvquant::extract_palette(img).first.size();
    if (distinct > 256) {
        std::cerr << "input has " << distinct << " colors; pre-quantizing to 256 with median cut\n";
        img = cvquant::median_cut(img, 256);
    }

    cvquant::QuantizeConfig qc;
    qc.target_colors = colors;
    qc.alpha = alpha;
    qc.equivalence = cvquant::load_profile(profile_path);
    const auto plan = cvquant::plan_mergers(img, qc);
    const auto [out_img, sidecar] = cvquant::recolor(img, plan);

    const auto report = cvquant::write_indexed_png(out_img, out_path);
    cvquant::save_sidecar(sidecar_path, sidecar);
    std::cout << "quantized " << image_path.string() << ": " << distinct << " -> "
              << report.palette_size << " colors, " << report.bytes << " bytes ("
              << plan.removed.size() << " colors merged)\n";
    return 0;
}

int run_dequantize(const fs::path& image_path, const fs::path& sidecar_path,
                   const fs::path& out_path) {
    const auto img = cvquant::read_png(image_path);
    const auto sidecar = cvquant::load_sidecar(sidecar_path);
    const auto restored = cvquant::dequantize(img, sidecar);
    const auto report = cvquant::write_indexed_png(restored, out_path);
    std::cout << "restored " << report.palette_size << " colors, wrote " << out_path.string() << "\n";
    return 0;
}

int run_eval(const std::string& mode, const fs::path& config_path, const fs::path& out_path) {
    const auto cfg = cvquant::load_experiment_config(config_path);
    if (cfg.users.empty()) throw std::runtime_error("config: 'events' must list at least one dataset");
    const auto images = cvquant::resolve_image_list(cfg.images);

    std::vector<cvquant::ConfusionDataset> datasets;
    for (const auto& path : cfg.users) datasets.push_back(load_dataset(path));

    auto out = open_out(out_path);
    bool header = true;

    if (mode == "compress") {
        double reduction_sum = 0.0;
        std::size_t count = 0;
        for (const auto& dataset : datasets) {
            const auto records = cvquant::run_compress(cfg, images, dataset);
            cvquant::write_compression_csv(out, records, header);
            header = false;
            for (const auto& r : records) {
                reduction_sum += r.size_reduction;
                ++count;
            }
        }
        std::cout << "compress: " << count << " records, mean size reduction vs reference "
                  << cvquant::format_double(reduction_sum / double(count)) << "\n";
    } else if (mode == "hue") {
        for (const auto& dataset : datasets) {
            const auto hash = cvquant::dataset_hash(dataset);
            for (const auto kind : cfg.delta_kinds) {
                const auto result = cvquant::run_hue_validation(cfg, images, dataset, kind);
                cvquant::write_hue_csv(out, result, kind, cfg.seed, hash, header);
                header = false;
                std::cout << "hue: user=" << dataset.user_id << " kind=" << cvquant::to_string(kind)
                          << " r_squared=" << cvquant::format_double(result.r_squared);
                if (!result.omitted_buckets.empty()) {
                    std::cout << " (omitted buckets:";
                    for (const auto& b : result.omitted_buckets) std::cout << ' ' << b;
                    std::cout << ')';
                }
                std::cout << "\n";
            }
        }
    } else if (mode == "history") {
        for (const auto& dataset : datasets) {
            const auto hash = cvquant::dataset_hash(dataset);
            for (const auto kind : cfg.delta_kinds) {
                for (const auto& image : images) {
                    const auto records =
                        cvquant::run_history_sweep(cfg, image, dataset, kind, cfg.fractions);
                    cvquant::write_history_csv(out, records, kind, cfg.seed, hash, header);
                    header = false;
                    for (const auto& r : records) {
                        std::cout << "history: image=" << r.image_id << " f="
                                  << cvquant::format_double(r.history_fraction)
                                  << (r.skipped ? " skipped: " + r.note
                                                : " rho=" + cvquant::format_double(r.spearman_rho))
                                  << "\n";
                    }
                }
            }
        }
    } else if (mode == "alpha") {
        for (const auto& dataset : datasets) {
            const auto hash = cvquant::dataset_hash(dataset);
            for (const auto kind : cfg.delta_kinds) {
                const auto rows =
                    cvquant::run_alpha_sweep(cfg, images, dataset, kind, cfg.target_colors);
                cvquant::write_alpha_csv(out, rows, cfg.target_colors, kind, cfg.seed, hash, header);
                header = false;
                for (const auto& r : rows) {
                    std::cout << "alpha=" << cvquant::format_double(r.alpha)
                              << " mean reduction vs alpha=1: "
                              << cvquant::format_double(r.mean_reduction_vs_alpha1) << "\n";
                }
            }
        }
    } else {
        throw std::runtime_error("unknown eval mode '" + mode + "' (expected compress|hue|alpha|history)");
    }
    std::cout << "wrote " << out_path.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Palette quantization driven by per-user color-confusion data"};
    app.require_subcommand(1);

    // gen-synthetic
    std::string gen_model;
    std::uint64_t gen_turns = 0;
    std::uint64_t gen_seed = 0;
    double gen_difficulty = 0.5;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic observer's confusion log");
    gen->add_option("--model", gen_model, "Observer model: protan|deutan|tritan|none")->required();
    gen->add_option("--turns", gen_turns, "Number of game turns")->required();
    gen->add_option("--seed", gen_seed, "Random seed")->default_val(0);
    gen->add_option("--difficulty", gen_difficulty, "Specimen similarity in (0, 1]")->default_val(0.5);
    gen->add_option("--out", gen_out, "Output events CSV")->required();

    // rank-users
    std::string rank_events;
    double rank_beta = 0.5;
    std::size_t rank_min_events = 1000;
    std::size_t rank_top = 30;
    auto* rank = app.add_subcommand("rank-users", "Score and rank users by the confusion heuristic");
    rank->add_option("--events", rank_events, "Events CSV file or directory of CSVs")->required();
    rank->add_option("--beta", rank_beta, "Weight of the hue-mismatch term")->default_val(0.5);
    rank->add_option("--min-events", rank_min_events, "Minimum events per user")->default_val(1000);
    rank->add_option("--top", rank_top, "How many users to print")->default_val(30);

    // fit
    std::string fit_events;
    std::string fit_kind = "linear";
    int fit_hidden = 100;
    std::uint64_t fit_seed = 0;
    std::string fit_out;
    auto* fit = app.add_subcommand("fit", "Fit a color-equivalence transform from an event log");
    fit->add_option("--events", fit_events, "Events CSV")->required();
    fit->add_option("--kind", fit_kind, "Transform kind: linear|nonlinear")->default_val("linear");
    fit->add_option("--hidden", fit_hidden, "Hidden units for the nonlinear kind")->default_val(100);
    fit->add_option("--seed", fit_seed, "Random seed for the nonlinear fit")->default_val(0);
    fit->add_option("--out", fit_out, "Output profile JSON")->required();

    // quantize
    std::string q_image, q_profile, q_out, q_sidecar;
    std::size_t q_colors = 128;
    double q_alpha = 0.5;
    auto* quant = app.add_subcommand("quantize", "Incrementally quantize an image with a fitted profile");
    quant->add_option("--image", q_image, "Input PNG")->required();
    quant->add_option("--profile", q_profile, "Fitted profile JSON")->required();
    quant->add_option("--colors", q_colors, "Target palette size")->required();
    quant->add_option("--alpha", q_alpha, "Weight between confusability and pixel count")->default_val(0.5);
    quant->add_option("--out", q_out, "Output PNG")->required();
    quant->add_option("--sidecar", q_sidecar, "Output reversibility sidecar")->required();

    // dequantize
    std::string d_image, d_sidecar, d_out;
    auto* dequant = app.add_subcommand("dequantize", "Restore a quantized image from its sidecar");
    dequant->add_option("--image", d_image, "Quantized PNG")->required();
    dequant->add_option("--sidecar", d_sidecar, "Reversibility sidecar")->required();
    dequant->add_option("--out", d_out, "Output PNG")->required();

    // eval
    std::string e_mode, e_config, e_out;
    auto* eval = app.add_subcommand("eval", "Run an experiment sweep from a config file");
    eval->add_option("mode", e_mode, "compress|hue|alpha|history")->required();
    eval->add_option("--config", e_config, "Flat key=value config file")->required();
    eval->add_option("--out", e_out, "Output results CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return run_gen_synthetic(gen_model, gen_turns, gen_seed, gen_difficulty, gen_out);
        if (rank->parsed()) return run_rank_users(rank_events, rank_beta, rank_min_events, rank_top);
        if (fit->parsed()) return run_fit(fit_events, fit_kind, fit_hidden, fit_seed, fit_out);
        if (quant->parsed()) return run_quantize(q_image, q_profile, q_colors, q_alpha, q_out, q_sidecar);
        if (dequant->parsed()) return run_dequantize(d_image, d_sidecar, d_out);
        if (eval->parsed()) return run_eval(e_mode, e_config, e_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
