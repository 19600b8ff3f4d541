// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0

#include "crossalign/cli.hpp"

#include <cstdint>
#include <cstdio>
#include <deque>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crossalign/analysis/embedding_analysis.hpp"
#include "crossalign/analysis/figure.hpp"
#include "crossalign/analysis/sweep.hpp"
#include "crossalign/dataset.hpp"
#include "crossalign/descriptions.hpp"
#include "crossalign/embedding_cache.hpp"
#include "crossalign/models.hpp"
#include "crossalign/trainer.hpp"

namespace crossalign::cli {

namespace detail {

/// Reads `key=value` lines; blank lines and lines starting with '#' are skipped.
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open config file '" + path + "'");
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        const auto body = crossalign::detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) {
            fail(ErrorKind::usage, path + ":" + std::to_string(no) + ": expected key=value");
        }
        out.emplace_back(std::string(crossalign::detail::trim(body.substr(0, eq))),
                         std::string(crossalign::detail::trim(body.substr(eq + 1))));
    }
    return out;
}

/// Applies config entries to options not already set on the command line or by environment.
void apply_config(CLI::App& sub, const std::string& path) {
    for (const auto& [key, value] : read_config(path)) {
        if (key == "config" || key == "help") fail(ErrorKind::usage, path + ": key '" + key + "' is not allowed");
        CLI::Option* opt = nullptr;
        try {
            opt = sub.get_option("--" + key);
        } catch (const CLI::OptionNotFound&) {
            fail(ErrorKind::usage, path + ": unknown key '" + key + "' for subcommand " + sub.get_name());
        }
        if (opt->count() > 0) continue;
        opt->add_result(value);
        try {
            opt->run_callback();
        } catch (const CLI::Error& e) {
            fail(ErrorKind::usage, path + ": bad value for '" + key + "': " + e.what());
        }
    }
}

struct TrainFlags {
    std::string dataset;
    std::string cache;
    double lambda = 0.3;
    double tau = 0.5;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lr = 0.05;
    double min_lr = 0.0;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 1;
    std::string arch = "tiny_cnn";
    std::size_t d = 64;
    bool raw_projection = false;
    std::size_t eval_every = 1;
    double val_fraction = 0.2;

    Experiment experiment(const ImageDataset& data, std::size_t k) const {
        Experiment e;
        e.model.arch = parse_arch(arch);
        e.model.channels = data.channels;
        e.model.height = data.height;
        e.model.width = data.width;
        e.model.feature_dim = d;
        e.model.num_classes = data.num_classes;
        e.model.embed_dim = k;
        e.model.init_seed = seed;
        e.train.epochs = epochs;
        e.train.batch_size = batch_size;
        e.train.base_lr = lr;
        e.train.min_lr = min_lr;
        e.train.momentum = momentum;
        e.train.weight_decay = weight_decay;
        e.train.seed = seed;
        e.train.alignment = {lambda, tau, !raw_projection};
        e.train.eval_every = eval_every;
        return e;
    }
};

CLI::Option* add_train_flags(CLI::App* sub, TrainFlags& f, bool with_seed) {
    auto* dataset = sub->add_option("--dataset", f.dataset, "Dataset file");
    sub->add_option("--lambda", f.lambda, "Weight of the alignment loss")->capture_default_str();
    sub->add_option("--tau", f.tau, "Alignment temperature")->capture_default_str();
    sub->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str();
    sub->add_option("--batch-size", f.batch_size, "Mini-batch size")->capture_default_str();
    sub->add_option("--lr", f.lr, "Base learning rate")->capture_default_str();
    sub->add_option("--min-lr", f.min_lr, "Final learning rate of the cosine schedule")->capture_default_str();
    sub->add_option("--momentum", f.momentum, "SGD momentum")->capture_default_str();
    sub->add_option("--weight-decay", f.weight_decay, "L2 weight decay on weights")->capture_default_str();
    if (with_seed) {
        sub->add_option("--seed", f.seed, "Seed for initialization and shuffling")
            ->envname("CROSSALIGN_SEED")
            ->capture_default_str();
    }
    sub->add_option("--arch", f.arch, "Backbone architecture")
        ->check(CLI::IsMember({"mlp", "tiny_cnn"}))
        ->capture_default_str();
    sub->add_option("--d", f.d, "Image feature dimension")->capture_default_str();
    sub->add_flag("--raw-projection", f.raw_projection, "Do not L2-normalize W*f_img before the alignment loss");
    sub->add_option("--eval-every", f.eval_every, "Validate every N epochs")->capture_default_str();
    sub->add_option("--val-fraction", f.val_fraction, "Share of samples (last by sorted id) held out")
        ->capture_default_str();
    return dataset;
}

ImageDataset load_dataset_flag(const std::string& path) {
    try {
        return load_dataset(path);
    } catch (const Error& e) {
        fail(e.kind(), "--dataset: " + e.message());
    }
}

EmbeddingCache load_cache_flag(const std::string& flag, const std::string& path) {
    try {
        return read_cache(path);
    } catch (const Error& e) {
        fail(e.kind(), flag + ": " + e.message());
    }
}

}  // namespace detail

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"crossalign: classifiers trained with text-embedding alignment", "crossalign"};
    app.require_subcommand(1);

    std::vector<std::pair<CLI::App*, CLI::Option*>> required;  // checked after --config is applied
    std::deque<std::string> config_paths;  // stable addresses for the --config bindings
    std::vector<std::pair<CLI::App*, const std::string*>> configurable;
    auto add_config = [&](CLI::App* sub) {
        auto& path = config_paths.emplace_back();
        sub->add_option("--config", path, "File of key=value lines supplying defaults for this subcommand");
        configurable.emplace_back(sub, &path);
    };

    // synth
    SyntheticImageConfig synth_cfg;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Generate the synthetic labelled image dataset");
    required.emplace_back(synth, synth->add_option("--out", synth_out, "Output dataset file"));
    synth->add_option("--classes", synth_cfg.num_classes, "Number of classes")->capture_default_str();
    synth->add_option("--samples", synth_cfg.samples, "Number of samples")->capture_default_str();
    synth->add_option("--channels", synth_cfg.channels, "Image channels")->capture_default_str();
    synth->add_option("--height", synth_cfg.height, "Image height")->capture_default_str();
    synth->add_option("--width", synth_cfg.width, "Image width")->capture_default_str();
    synth->add_option("--noise", synth_cfg.noise, "Pixel noise standard deviation")->capture_default_str();
    synth->add_option("--max-shift", synth_cfg.max_shift, "Maximum circular shift in pixels")->capture_default_str();
    synth->add_option("--seed", synth_cfg.seed, "Generator seed")->envname("CROSSALIGN_SEED")->capture_default_str();
    add_config(synth);

    // describe
    std::string describe_dataset, describe_kind = "long", describe_out;
    std::optional<std::string> describe_prompt;
    auto* describe = app.add_subcommand("describe", "Build a description set with the offline stub provider");
    required.emplace_back(describe, describe->add_option("--dataset", describe_dataset, "Dataset file (ids and labels)"));
    describe->add_option("--kind", describe_kind, "Prompt kind")
        ->check(CLI::IsMember({"short", "long"}))
        ->capture_default_str();
    describe->add_option("--prompt", describe_prompt, "Custom prompt text replacing the template of --kind");
    required.emplace_back(describe, describe->add_option("--out", describe_out, "Output description-set file"));
    add_config(describe);

    // embed
    std::string embed_descriptions, embed_encoder = "synthetic", embed_out;
    std::size_t embed_k = 16;
    double embed_sigma = 0.3;
    std::uint64_t embed_seed = 0;
    bool embed_no_normalize = false;
    auto* embed = app.add_subcommand("embed", "Encode a description set into an embedding cache");
    required.emplace_back(embed, embed->add_option("--descriptions", embed_descriptions, "Description-set file"));
    embed->add_option("--encoder", embed_encoder, "Text encoder")
        ->check(CLI::IsMember({"synthetic"}))
        ->capture_default_str();
    embed->add_option("--k", embed_k, "Embedding dimension")->capture_default_str();
    embed->add_option("--noise-sigma", embed_sigma, "Synthetic encoder perturbation scale")->capture_default_str();
    embed->add_option("--seed", embed_seed, "Encoder seed")->envname("CROSSALIGN_SEED")->capture_default_str();
    embed->add_flag("--no-normalize", embed_no_normalize, "Store raw encoder output instead of unit rows");
    required.emplace_back(embed, embed->add_option("--out", embed_out, "Output cache file"));
    add_config(embed);

    // train
    detail::TrainFlags train_flags;
    std::string train_report, train_checkpoint, train_resume;
    std::optional<std::size_t> train_stop_after;
    auto* train_cmd = app.add_subcommand("train", "Train one model");
    required.emplace_back(train_cmd, detail::add_train_flags(train_cmd, train_flags, true));
    train_cmd->add_option("--cache", train_flags.cache, "Embedding cache (omit for a pure cross-entropy baseline)");
    required.emplace_back(train_cmd, train_cmd->add_option("--report", train_report, "Per-epoch CSV report"));
    train_cmd->add_option("--checkpoint", train_checkpoint, "Write a resumable checkpoint after every epoch");
    train_cmd->add_option("--resume", train_resume, "Continue from a checkpoint");
    train_cmd->add_option("--stop-after", train_stop_after, "Stop once this many epochs have completed");
    add_config(train_cmd);

    // sweep
    detail::TrainFlags sweep_flags;
    std::string sweep_param = "lambda", sweep_out;
    std::vector<double> sweep_values;
    std::vector<std::uint64_t> sweep_seeds = default_seeds();
    auto* sweep = app.add_subcommand("sweep", "Sweep lambda or tau over seeds");
    required.emplace_back(sweep, detail::add_train_flags(sweep, sweep_flags, false));
    required.emplace_back(sweep, sweep->add_option("--cache", sweep_flags.cache, "Embedding cache"));
    sweep->add_option("--param", sweep_param, "Swept parameter")
        ->check(CLI::IsMember({"lambda", "tau"}))
        ->capture_default_str();
    sweep->add_option("--values", sweep_values, "Comma-separated grid (default: the standard grid of --param)")
        ->delimiter(',');
    sweep->add_option("--seeds", sweep_seeds, "Comma-separated trial seeds")->delimiter(',')->capture_default_str();
    required.emplace_back(sweep, sweep->add_option("--out", sweep_out, "Output sweep CSV"));
    add_config(sweep);

    // compare
    detail::TrainFlags compare_flags;
    std::string compare_short, compare_long, compare_out;
    std::vector<std::uint64_t> compare_seeds = default_seeds();
    auto* compare = app.add_subcommand("compare", "Baseline vs short vs long description caches");
    required.emplace_back(compare, detail::add_train_flags(compare, compare_flags, false));
    required.emplace_back(compare, compare->add_option("--cache-short", compare_short, "Cache built from short descriptions"));
    required.emplace_back(compare, compare->add_option("--cache-long", compare_long, "Cache built from long descriptions"));
    compare->add_option("--seeds", compare_seeds, "Comma-separated trial seeds")->delimiter(',')->capture_default_str();
    required.emplace_back(compare, compare->add_option("--out", compare_out, "Output comparison CSV"));
    add_config(compare);

    // visualize
    std::string vis_cache, vis_dataset, vis_svg, vis_csv;
    AnalysisOptions vis;
    auto* visualize = app.add_subcommand("visualize", "t-SNE of sampled cache rows with cluster scores");
    required.emplace_back(visualize, visualize->add_option("--cache", vis_cache, "Embedding cache"));
    required.emplace_back(visualize, visualize->add_option("--dataset", vis_dataset, "Dataset file supplying labels"));
    visualize->add_option("--classes", vis.classes, "Classes to sample")->capture_default_str();
    visualize->add_option("--per-class", vis.per_class, "Rows per sampled class")->capture_default_str();
    visualize->add_option("--perplexity", vis.tsne.perplexity, "t-SNE perplexity")->capture_default_str();
    visualize->add_option("--iterations", vis.tsne.iterations, "t-SNE iterations")->capture_default_str();
    visualize->add_option("--seed", vis.seed, "Sampling and t-SNE seed")->envname("CROSSALIGN_SEED")->capture_default_str();
    required.emplace_back(visualize, visualize->add_option("--out-svg", vis_svg, "Scatter figure"));
    required.emplace_back(visualize, visualize->add_option("--out-csv", vis_csv, "Point coordinates CSV"));
    add_config(visualize);

    try {
        std::vector<std::string> args;
        for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        if (msg.find('\n') != std::string::npos) msg = msg.substr(0, msg.find('\n'));
        err << "crossalign: usage error: " << msg << "\n";
        return kExitUsage;
    }

    try {
        for (auto& [sub, path] : configurable) {
            if (sub->parsed() && !path->empty()) detail::apply_config(*sub, *path);
        }
        for (const auto& [sub, opt] : required) {
            if (sub->parsed() && opt->count() == 0) {
                fail(ErrorKind::usage, sub->get_name() + ": " + opt->get_name() + " is required");
            }
        }

        if (synth->parsed()) {
            ImageDataset data = make_synthetic_dataset(synth_cfg);
            save_dataset(data, synth_out);
            out << "wrote " << data.size() << " samples to " << synth_out << "\n";
        } else if (describe->parsed()) {
            const ImageDataset data = detail::load_dataset_flag(describe_dataset);
            StubProvider provider;
            const auto refs = data.refs();
            const DescriptionSet set =
                build_description_set(refs, provider, parse_prompt_kind(describe_kind), describe_prompt);
            save_set(set, describe_out);
            out << "wrote " << set.size() << " " << describe_kind << " descriptions to " << describe_out << "\n";
        } else if (embed->parsed()) {
            DescriptionSet set;
            try {
                set = load_set(embed_descriptions);
            } catch (const Error& e) {
                fail(e.kind(), "--descriptions: " + e.message());
            }
            SyntheticEncoder encoder(embed_k, embed_sigma, embed_seed);
            const EmbeddingCache cache = build_cache(set, encoder, !embed_no_normalize);
            write_cache(cache, embed_out);
            out << "wrote " << cache.size() << " x " << cache.k() << " embeddings to " << embed_out << "\n";
        } else if (train_cmd->parsed()) {
            const ImageDataset data = detail::load_dataset_flag(train_flags.dataset);
            std::optional<EmbeddingCache> cache;
            if (!train_flags.cache.empty()) cache = detail::load_cache_flag("--cache", train_flags.cache);
            if (!cache && train_flags.lambda > 0.0) {
                fail(ErrorKind::usage, "--lambda " + std::to_string(train_flags.lambda) + " needs --cache");
            }
            const DatasetSplit split = split_by_sorted_id(data, train_flags.val_fraction);
            const Experiment exp = train_flags.experiment(data, cache ? cache->k() : 16);
            ModelBundle model;
            TrainState state;
            if (!train_resume.empty()) {
                Checkpoint ck = load_checkpoint(train_resume);
                if (ck.model.config().arch != exp.model.arch || ck.model.config().feature_dim != exp.model.feature_dim ||
                    ck.model.config().embed_dim != exp.model.embed_dim ||
                    ck.model.config().num_classes != exp.model.num_classes) {
                    fail(ErrorKind::validation, "--resume: checkpoint model does not match the requested configuration");
                }
                model = std::move(ck.model);
                state = std::move(ck.state);
            } else {
                model = init_params(exp.model);
            }
            TrainOptions options;
            options.stop_after = train_stop_after;
            options.on_epoch = [&](const EpochRecord& rec) {
                if (!train_checkpoint.empty()) save_checkpoint(model, state, train_checkpoint);
                char line[160];
                std::snprintf(line, sizeof line, "epoch %zu lr %.6f ce %.6f dist %.6f val_top1 %.4f\n", rec.epoch,
                              rec.lr, rec.ce_loss, rec.dist_loss, rec.val_top1);
                out << line;
            };
            const TrainReport report =
                train(exp.train, split.train, split.val, cache ? &*cache : nullptr, model, state, options);
            write_report_csv(report, train_report);
            out << "final val top-1 " << report.final_val_top1 << "\n";
        } else if (sweep->parsed()) {
            const ImageDataset data = detail::load_dataset_flag(sweep_flags.dataset);
            const EmbeddingCache cache = detail::load_cache_flag("--cache", sweep_flags.cache);
            SweepGrid grid;
            grid.param = parse_sweep_param(sweep_param);
            grid.values = !sweep_values.empty() ? sweep_values
                          : grid.param == SweepParam::lambda ? default_lambda_grid()
                                                             : default_tau_grid();
            grid.base = sweep_flags.experiment(data, cache.k());
            grid.seeds = sweep_seeds;
            const SweepTable table = run_sweep(grid, split_by_sorted_id(data, sweep_flags.val_fraction), cache);
            for (const auto& row : table.rows)
                for (const auto& t : row.trials)
                    if (!t.val_top1) err << "crossalign: trial " << sweep_param << "=" << row.value << " seed " << t.seed
                                         << " failed: " << t.diagnostic << "\n";
            write_file(sweep_out, sweep_csv(table));
            if (auto best = best_value(table)) out << "best " << sweep_param << " " << *best << "\n";
        } else if (compare->parsed()) {
            const ImageDataset data = detail::load_dataset_flag(compare_flags.dataset);
            const EmbeddingCache cs = detail::load_cache_flag("--cache-short", compare_short);
            const EmbeddingCache cl = detail::load_cache_flag("--cache-long", compare_long);
            const ComparisonTable t = short_vs_long_report(split_by_sorted_id(data, compare_flags.val_fraction), cs,
                                                           cl, compare_flags.experiment(data, cs.k()), compare_seeds);
            write_file(compare_out, comparison_csv(t));
            out << comparison_csv(t);
        } else if (visualize->parsed()) {
            const ImageDataset data = detail::load_dataset_flag(vis_dataset);
            const EmbeddingCache cache = detail::load_cache_flag("--cache", vis_cache);
            vis.tsne.seed = vis.seed;
            const auto refs = data.refs();
            const AnalysisResult result = embedding_analysis(cache, refs, vis);
            emit_figure(result.points, result.labels, vis_svg);
            write_file(vis_csv, points_csv(result));
            char line[200];
            std::snprintf(line, sizeof line, "points %zu purity %.4f silhouette %s kl %.6f -> %.6f\n",
                          result.labels.size(), result.purity,
                          result.silhouette ? std::to_string(*result.silhouette).c_str() : "n/a", result.initial_kl,
                          result.final_kl);
            out << line;
        }
    } catch (const Error& e) {
        err << "crossalign: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "crossalign: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace crossalign::cli
