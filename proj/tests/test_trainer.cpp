// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "crossalign/binary_io.hpp"
#include "crossalign/dataset.hpp"
#include "crossalign/descriptions.hpp"
#include "crossalign/embedding_cache.hpp"
#include "crossalign/error.hpp"
#include "crossalign/trainer.hpp"
#include "support.hpp"

using namespace crossalign;
using testing_support::TempDir;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::io;  // sentinel
}

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

struct Task {
    DatasetSplit split;
    EmbeddingCache cache;
};

Task small_task(std::size_t samples = 300, std::size_t k = 8) {
    SyntheticImageConfig sc;
    sc.samples = samples;
    sc.num_classes = 5;
    sc.height = sc.width = 6;
    sc.seed = 3;
    const ImageDataset data = make_synthetic_dataset(sc);
    StubProvider stub;
    const auto refs = data.refs();
    SyntheticEncoder enc(k, 0.3, 0);
    return {split_by_sorted_id(data), build_cache(build_description_set(refs, stub, PromptKind::long_form), enc)};
}

ModelConfig model_for(const Task& t, Arch arch = Arch::mlp, std::uint64_t seed = 1) {
    ModelConfig m;
    m.arch = arch;
    m.channels = t.split.train.channels;
    m.height = t.split.train.height;
    m.width = t.split.train.width;
    m.num_classes = t.split.train.num_classes;
    m.feature_dim = 16;
    m.embed_dim = t.cache.k();
    m.init_seed = seed;
    return m;
}

TrainConfig quick(std::size_t epochs = 3) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 16;
    c.seed = 5;
    return c;
}

std::vector<double> flat(const ModelBundle& m) {
    std::vector<double> out;
    for (const auto& p : m.params()) out.insert(out.end(), p.value.data().begin(), p.value.data().end());
    return out;
}

}  // namespace

TEST_CASE("cosine schedule anchors") {
    TrainConfig c;
    c.base_lr = 0.1;
    c.min_lr = 0.01;
    c.epochs = 7;
    CHECK(cosine_lr(0, c) == 0.1);
    CHECK(std::abs(cosine_lr(6, c) - 0.01) < 1e-17);
    CHECK(std::abs(cosine_lr(3, c) - 0.055) < 1e-15);
    for (std::size_t e = 1; e < 7; ++e) CHECK(cosine_lr(e, c) < cosine_lr(e - 1, c));
    c.epochs = 1;
    CHECK(cosine_lr(0, c) == 0.1);
    CHECK(kind_of([&] { cosine_lr(1, c); }) == ErrorKind::usage);
}

TEST_CASE("sgd step recurrences") {
    std::vector<double> w{1.0}, g{0.5}, v{0.0};
    sgd_step(w, g, v, 0.1, 0.0, 0.0);
    CHECK(w[0] == 0.95);

    std::vector<double> w2{0.3, -2.0}, g2{0.0, 0.0}, v2{0.0, 0.0};
    sgd_step(w2, g2, v2, 0.1, 0.9, 0.0);
    CHECK(w2 == std::vector<double>{0.3, -2.0});

    std::vector<double> w3{0.0}, g3{1.0}, v3{0.0};
    sgd_step(w3, g3, v3, 0.1, 0.9, 0.0);
    CHECK(v3[0] == 1.0);
    CHECK(std::abs(w3[0] + 0.1) < 1e-15);
    sgd_step(w3, g3, v3, 0.1, 0.9, 0.0);
    CHECK(std::abs(v3[0] - 1.9) < 1e-15);
    CHECK(std::abs(w3[0] + 0.29) < 1e-15);

    std::vector<double> w4{2.0}, g4{0.0}, v4{0.0};
    sgd_step(w4, g4, v4, 0.5, 0.0, 0.1);  // g' = 0.2
    CHECK(std::abs(w4[0] - 1.9) < 1e-15);
}

TEST_CASE("weight decay skips biases") {
    ModelConfig mc;
    mc.arch = Arch::mlp;
    mc.height = mc.width = 2;
    ModelBundle m = init_params(mc);
    for (double& b : m.param("head.bias").mutable_data()) b = 1.0;
    SgdState state = make_sgd_state(m);
    TrainConfig c;
    c.momentum = 0.0;
    c.weight_decay = 0.5;
    const double w_before = m.param("head.weight")[0];
    apply_sgd(m, state, 0.1, c);  // all grads are zero
    CHECK(m.param("head.bias")[0] == 1.0);
    CHECK(m.param("head.weight")[0] == w_before - 0.1 * 0.5 * w_before);
}

TEST_CASE("config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.min_lr = 1.0;
    CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
    c = TrainConfig{};
    c.momentum = 1.0;
    CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
    c = TrainConfig{};
    c.epochs = 0;
    CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
    c = TrainConfig{};
    c.alignment.tau = 0.0;
    CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
}

TEST_CASE("top-1 against a counting oracle") {
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> logits(200 * 10);
    std::vector<std::size_t> labels(200);
    for (double& v : logits) v = std::round(u(gen) * 4) / 4;  // coarse values force ties
    for (auto& l : labels) l = gen() % 10;
    std::size_t expect = 0;
    for (std::size_t i = 0; i < 200; ++i) {
        std::size_t arg = 0;
        for (std::size_t j = 0; j < 10; ++j)
            if (logits[i * 10 + j] > logits[i * 10 + arg]) arg = j;
        expect += arg == labels[i];
    }
    CHECK(count_top1(logits, 10, labels) == expect);
    CHECK(top1_accuracy(logits, 10, labels) == static_cast<double>(expect) / 200.0);

    std::vector<double> onehot(30, 0.0);
    std::vector<std::size_t> l3{2, 0, 1};
    for (std::size_t i = 0; i < 3; ++i) onehot[i * 10 + l3[i]] = 1.0;
    CHECK(top1_accuracy(onehot, 10, l3) == 1.0);
    std::vector<std::size_t> wrong{3, 3, 3};
    CHECK(top1_accuracy(onehot, 10, wrong) == 0.0);
    std::vector<double> tie(10, 0.0);
    std::vector<std::size_t> zero{0};
    CHECK(top1_accuracy(tie, 10, zero) == 1.0);  // ties go to the lowest index
    CHECK(kind_of([] { top1_accuracy({}, 10, {}); }) == ErrorKind::usage);
}

TEST_CASE("evaluate requires a nonempty set") {
    const Task t = small_task(60);
    const ModelBundle m = init_params(model_for(t));
    ImageDataset empty = t.split.val.subset({});
    CHECK(kind_of([&] { evaluate(m, empty); }) == ErrorKind::usage);
    const double acc = evaluate(m, t.split.val);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    CHECK(evaluate(m, t.split.val, 7) == acc);
}

TEST_CASE("epoch order depends only on seed and epoch") {
    CHECK(epoch_order(50, 1, 3) == epoch_order(50, 1, 3));
    CHECK(epoch_order(50, 1, 3) != epoch_order(50, 1, 4));
    CHECK(epoch_order(50, 1, 3) != epoch_order(50, 2, 3));
    auto o = epoch_order(50, 1, 0);
    std::sort(o.begin(), o.end());
    for (std::size_t i = 0; i < 50; ++i) CHECK(o[i] == i);
}

TEST_CASE("zero learning rate leaves the model untouched") {
    const Task t = small_task(120);
    ModelBundle m = init_params(model_for(t, Arch::tiny_cnn));
    const auto before = flat(m);
    const double initial = evaluate(m, t.split.val);
    TrainConfig c = quick(1);
    c.base_lr = 0.0;
    const TrainReport r = train(c, t.split.train, t.split.val, &t.cache, m);
    CHECK(flat(m) == before);
    CHECK(r.final_val_top1 == initial);
    REQUIRE(r.epochs.size() == 1);
    CHECK(r.epochs[0].lr == 0.0);
}

TEST_CASE("report shape and loss bookkeeping") {
    const Task t = small_task();
    ModelBundle m = init_params(model_for(t));
    TrainConfig c = quick(4);
    c.eval_every = 2;
    const TrainReport r = train(c, t.split.train, t.split.val, &t.cache, m);
    REQUIRE(r.epochs.size() == 4);
    for (std::size_t e = 0; e < 4; ++e) {
        const auto& rec = r.epochs[e];
        CHECK(rec.epoch == e);
        CHECK(rec.lr == cosine_lr(e, c));
        CHECK(std::isfinite(rec.ce_loss));
        CHECK(std::isfinite(rec.dist_loss));
        CHECK(std::abs(rec.total_loss - (rec.ce_loss + 0.3 * rec.dist_loss)) < 1e-12);
    }
    // Evaluated at epochs 0, 1, 3; epoch 2 carries the epoch-1 value forward.
    CHECK(r.epochs[2].val_top1 == r.epochs[1].val_top1);
    CHECK(r.final_val_top1 == r.epochs[3].val_top1);
    CHECK(r.final_val_top1 == evaluate(m, t.split.val));
    CHECK(r.wall_seconds >= 0.0);
}

TEST_CASE("training is deterministic") {
    const Task t = small_task();
    auto run = [&] {
        ModelBundle m = init_params(model_for(t, Arch::tiny_cnn));
        return std::make_pair(train(quick(), t.split.train, t.split.val, &t.cache, m), flat(m));
    };
    const auto a = run(), b = run();
    CHECK(a.first == b.first);
    CHECK(report_csv(a.first) == report_csv(b.first));
    CHECK(a.second == b.second);
}

TEST_CASE("lambda = 0 is bit-identical to the baseline without an alignment path") {
    const Task t = small_task();
    for (Arch arch : {Arch::mlp, Arch::tiny_cnn}) {
        TrainConfig c = quick();
        c.alignment.lambda = 0.0;
        ModelBundle a = init_params(model_for(t, arch)), b = init_params(model_for(t, arch));
        const TrainReport with_cache = train(c, t.split.train, t.split.val, &t.cache, a);
        const TrainReport baseline = train(c, t.split.train, t.split.val, nullptr, b);
        CHECK(with_cache == baseline);
        CHECK(report_csv(with_cache) == report_csv(baseline));
        CHECK(flat(a) == flat(b));
        for (const auto& rec : baseline.epochs) CHECK(rec.dist_loss == 0.0);
    }
}

TEST_CASE("alignment changes training when lambda > 0") {
    const Task t = small_task();
    ModelBundle a = init_params(model_for(t)), b = init_params(model_for(t));
    train(quick(), t.split.train, t.split.val, &t.cache, a);
    TrainConfig c = quick();
    c.alignment.lambda = 0.0;
    train(c, t.split.train, t.split.val, nullptr, b);
    CHECK(flat(a) != flat(b));
}

TEST_CASE("pre-flight checks fail before any epoch") {
    const Task t = small_task();
    std::size_t epochs_seen = 0;
    TrainOptions opts;
    opts.on_epoch = [&](const EpochRecord&) { ++epochs_seen; };

    // Cache missing one training id.
    std::vector<std::string> ids;
    std::vector<float> rows;
    for (std::size_t i = 0; i < t.cache.size(); ++i) {
        if (t.cache.ids()[i] == t.split.train.ids[5]) continue;
        ids.push_back(t.cache.ids()[i]);
        rows.insert(rows.end(), t.cache.row(i).begin(), t.cache.row(i).end());
    }
    const EmbeddingCache holey(t.cache.k(), ids, rows);
    ModelBundle m = init_params(model_for(t));
    TrainState state;
    const std::string msg = message_of([&] { train(quick(), t.split.train, t.split.val, &holey, m, state, opts); });
    CHECK_THAT(msg, Catch::Matchers::ContainsSubstring(t.split.train.ids[5]));
    CHECK(kind_of([&] { train(quick(), t.split.train, t.split.val, &holey, m, state, opts); }) ==
          ErrorKind::validation);

    ModelConfig wrong_k = model_for(t);
    wrong_k.embed_dim = t.cache.k() + 1;
    ModelBundle mk = init_params(wrong_k);
    CHECK(kind_of([&] { train(quick(), t.split.train, t.split.val, &t.cache, mk, state, opts); }) ==
          ErrorKind::validation);

    ModelBundle mb = init_params(model_for(t));
    CHECK(kind_of([&] { train(quick(), t.split.train, t.split.val, nullptr, mb, state, opts); }) == ErrorKind::usage);
    CHECK(epochs_seen == 0);
}

TEST_CASE("non-finite loss aborts with epoch and batch context") {
    const Task t = small_task();
    ModelBundle m = init_params(model_for(t));
    TrainConfig c = quick();
    c.base_lr = 1e200;
    c.min_lr = 1e200;
    const std::string msg = message_of([&] { train(c, t.split.train, t.split.val, &t.cache, m); });
    CHECK_THAT(msg, Catch::Matchers::ContainsSubstring("epoch") && Catch::Matchers::ContainsSubstring("batch"));
    ModelBundle m2 = init_params(model_for(t));
    CHECK(kind_of([&] { train(c, t.split.train, t.split.val, &t.cache, m2); }) == ErrorKind::numerical);
}

TEST_CASE("report CSV format") {
    TrainReport r;
    r.epochs.push_back({0, 0.05, 2.302585093, 1.5, 2.75, 0.1, 0.125});
    CHECK(report_csv(r) ==
          "epoch,lr,ce_loss,dist_loss,total_loss,train_top1,val_top1\n"
          "0,0.050000,2.302585,1.500000,2.750000,0.100000,0.125000\n");
}

TEST_CASE("checkpoint round trip is bit-exact") {
    TempDir dir("ckpt");
    const Task t = small_task();
    ModelBundle m = init_params(model_for(t, Arch::tiny_cnn));
    TrainState state;
    TrainOptions opts;
    opts.stop_after = 2;
    train(quick(4), t.split.train, t.split.val, &t.cache, m, state, opts);
    REQUIRE(state.epochs_completed == 2);

    save_checkpoint(m, state, dir.file("a.ckpt"));
    const Checkpoint ck = load_checkpoint(dir.file("a.ckpt"));
    CHECK(flat(ck.model) == flat(m));
    CHECK(ck.state == state);
    CHECK(ck.model.config().arch == Arch::tiny_cnn);
    save_checkpoint(ck.model, ck.state, dir.file("b.ckpt"));
    CHECK(read_file(dir.file("a.ckpt")) == read_file(dir.file("b.ckpt")));

    // A fresh model with no optimizer state also round-trips.
    const ModelBundle fresh = init_params(model_for(t));
    const std::string bytes = serialize_checkpoint(fresh, TrainState{});
    CHECK(serialize_checkpoint(parse_checkpoint(bytes).model, parse_checkpoint(bytes).state) == bytes);
}

TEST_CASE("corrupt checkpoints are rejected") {
    const Task t = small_task(60);
    const std::string good = serialize_checkpoint(init_params(model_for(t)), TrainState{});
    CHECK(good.substr(0, 4) == "GCKP");
    std::string bad = good;
    bad[1] = 'X';
    CHECK(kind_of([&] { parse_checkpoint(bad); }) == ErrorKind::format);
    std::string version = good;
    version[4] = 9;
    CHECK(kind_of([&] { parse_checkpoint(version); }) == ErrorKind::format);
    for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() / 2, good.size() - 1}) {
        CHECK(kind_of([&] { parse_checkpoint(good.substr(0, cut)); }) == ErrorKind::truncation);
    }
    CHECK(kind_of([&] { parse_checkpoint(good + "zz"); }) == ErrorKind::format);
}

TEST_CASE("resuming after epoch 2 of 5 reproduces the uninterrupted run") {
    TempDir dir("resume");
    const Task t = small_task();
    const TrainConfig c = quick(5);

    ModelBundle full = init_params(model_for(t, Arch::tiny_cnn));
    const TrainReport uninterrupted = train(c, t.split.train, t.split.val, &t.cache, full);

    ModelBundle part = init_params(model_for(t, Arch::tiny_cnn));
    TrainState state;
    TrainOptions stop;
    stop.stop_after = 2;
    train(c, t.split.train, t.split.val, &t.cache, part, state, stop);
    save_checkpoint(part, state, dir.file("mid.ckpt"));

    Checkpoint ck = load_checkpoint(dir.file("mid.ckpt"));
    const TrainReport resumed = train(c, t.split.train, t.split.val, &t.cache, ck.model, ck.state);
    REQUIRE(resumed.epochs.size() == 5);
    for (std::size_t e = 2; e < 5; ++e) CHECK(resumed.epochs[e] == uninterrupted.epochs[e]);
    CHECK(resumed == uninterrupted);
    CHECK(flat(ck.model) == flat(full));
}

TEST_CASE("dataset split and file round trip") {
    TempDir dir("dataset");
    SyntheticImageConfig sc;
    sc.samples = 50;
    sc.num_classes = 3;
    const ImageDataset data = make_synthetic_dataset(sc);
    CHECK(data.size() == 50);
    const DatasetSplit s = split_by_sorted_id(data);
    CHECK(s.train.size() == 40);
    CHECK(s.val.size() == 10);
    CHECK(s.val.ids.front() > s.train.ids.back());
    save_dataset(data, dir.file("d.gdst"));
    const ImageDataset back = load_dataset(dir.file("d.gdst"));
    CHECK(back.ids == data.ids);
    CHECK(back.labels == data.labels);
    CHECK(back.pixels == data.pixels);
    CHECK(make_synthetic_dataset(sc).pixels == data.pixels);
}

TEST_CASE("the synthetic task learns: dist loss drops below ln(batch) after the first epoch") {
    SyntheticImageConfig sc;
    sc.seed = 7;
    const ImageDataset data = make_synthetic_dataset(sc);
    StubProvider stub;
    const auto refs = data.refs();
    SyntheticEncoder enc(16, 0.3, 0);
    const EmbeddingCache cache = build_cache(build_description_set(refs, stub, PromptKind::long_form), enc);
    const DatasetSplit split = split_by_sorted_id(data);
    ModelConfig mc;
    mc.init_seed = 1;
    ModelBundle m = init_params(mc);
    TrainConfig c;
    c.epochs = 4;
    const TrainReport r = train(c, split.train, split.val, &cache, m);
    for (std::size_t e = 1; e < r.epochs.size(); ++e) CHECK(r.epochs[e].dist_loss < std::log(32.0));
    CHECK(r.epochs.back().ce_loss < r.epochs.front().ce_loss);
    CHECK(r.final_val_top1 > 0.3);
}
