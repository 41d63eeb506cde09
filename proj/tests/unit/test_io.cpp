#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <fstream>

#include "flash/checkpoint.hpp"
#include "flash/config_file.hpp"
#include "flash/parallel.hpp"
#include "flash/svg.hpp"
#include "gradcheck.hpp"
#include "tempdir.hpp"

using namespace flash;
using flash::testing::random_tensor;
using flash::testing::TempDir;

TEST_SUITE("config") {

TEST_CASE("parse rules") {
    auto kv = KeyValueConfig::parse("# comment\n  a = 3  \n\nb=1.5 # trailing\nc = true\nd = 2, 4,8\ne = text\n");
    std::uint64_t a = 0;
    double b = 0;
    bool c = false;
    std::vector<std::size_t> d;
    std::string e, missing = "keep";
    kv.get("a", a);
    kv.get("b", b);
    kv.get("c", c);
    kv.get("d", d);
    kv.get("e", e);
    kv.get("zzz", missing);
    CHECK(a == 3);
    CHECK(b == 1.5);
    CHECK(c);
    CHECK(d == std::vector<std::size_t>{2, 4, 8});
    CHECK(e == "text");
    CHECK(missing == "keep");
    CHECK_NOTHROW(kv.check_consumed());
    CHECK_THROWS_AS(KeyValueConfig::parse("a = 1\na = 2"), std::invalid_argument);
    CHECK_THROWS_AS(KeyValueConfig::parse("novalue"), std::invalid_argument);
    auto bad = KeyValueConfig::parse("n = -1\nx = 1.5abc\nf = maybe\nunused = 1");
    CHECK_THROWS_AS(bad.get("n", a), std::invalid_argument);
    CHECK_THROWS_AS(bad.get("x", b), std::invalid_argument);
    CHECK_THROWS_AS(bad.get("f", c), std::invalid_argument);
    CHECK_THROWS_AS(bad.check_consumed(), std::invalid_argument);
    CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/flash.cfg"), std::runtime_error);
}

TEST_CASE("model and train configs round-trip") {
    FlashConfig m = FlashConfig::tiny();
    m.dropout = 0.125;
    m.enable_msf = false;
    m.seed = 99;
    TrainConfig t;
    t.epochs = 7;
    t.schedule.peak = 3e-4;
    t.adamw.weight_decay = 0.05;
    auto kv = KeyValueConfig::parse(to_kv(m) + to_kv(t));
    FlashConfig m2;
    TrainConfig t2;
    read_model_config(kv, m2);
    read_train_config(kv, t2);
    kv.check_consumed();
    CHECK(m2.width == m.width);
    CHECK(m2.depths == m.depths);
    CHECK(m2.heads == m.heads);
    CHECK(m2.dropout == 0.125);
    CHECK_FALSE(m2.enable_msf);
    CHECK(m2.seed == 99);
    CHECK(t2.epochs == 7);
    CHECK(t2.schedule.peak == 3e-4);
    CHECK(t2.adamw.weight_decay == 0.05);
    CHECK(to_kv(m2) == to_kv(m));
}

TEST_CASE("synth config keys") {
    auto kv = KeyValueConfig::parse("synth.height = 32\nsynth.width = 128\nsynth.max_boxes = 4\n");
    SynthConfig s;
    read_synth_config(kv, s);
    CHECK(s.projection.height == 32);
    CHECK(s.projection.width == 128);
    CHECK(s.max_boxes == 4);
    auto typo = KeyValueConfig::parse("model.embed_dims = 8\n");
    FlashConfig m;
    read_model_config(typo, m);
    CHECK_THROWS_AS(typo.check_consumed(), std::invalid_argument);
}

}

TEST_SUITE("checkpoint") {

TEST_CASE("save, load and restore") {
    TempDir dir;
    Rng rng(1);
    ParameterList params{{"a.w", random_tensor({3, 4}, rng)}, {"b", random_tensor({5}, rng)}, {"s", Tensor(Shape{}, 2.5)}};
    save_checkpoint(params, dir / "m.flsh");
    ParameterList loaded = load_checkpoint(dir / "m.flsh");
    REQUIRE(loaded.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(loaded[i].name == params[i].name);
        CHECK(loaded[i].tensor.shape() == params[i].tensor.shape());
        CHECK(std::equal(loaded[i].tensor.data().begin(), loaded[i].tensor.data().end(),
                         params[i].tensor.data().begin()));
    }
    ParameterList target{{"b", Tensor({5})}, {"a.w", Tensor({3, 4})}, {"s", Tensor(Shape{})}};
    restore_parameters(target, dir / "m.flsh");
    CHECK(target[0].tensor.at(4) == params[1].tensor.at(4));
    CHECK(target[2].tensor.item() == 2.5);
    ParameterList wrong{{"a.w", Tensor({4, 3})}, {"b", Tensor({5})}, {"s", Tensor(Shape{})}};
    CHECK_THROWS_AS(restore_parameters(wrong, dir / "m.flsh"), std::runtime_error);
    ParameterList missing{{"c", Tensor({5})}};
    CHECK_THROWS_AS(restore_parameters(missing, dir / "m.flsh"), std::runtime_error);
}

TEST_CASE("corrupt files are rejected") {
    TempDir dir;
    atomic_write(dir / "bad.flsh", "NOPE\x01\x00");
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.flsh"), std::runtime_error);
    save_checkpoint({{"a", Tensor({64}, 1.0)}}, dir / "ok.flsh");
    std::string bytes;
    {
        std::ifstream is(dir / "ok.flsh", std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(is), {});
    }
    atomic_write(dir / "cut.flsh", bytes.substr(0, bytes.size() - 9));
    CHECK_THROWS_AS(load_checkpoint(dir / "cut.flsh"), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.flsh"), std::runtime_error);
}

TEST_CASE("atomic write leaves no temporaries") {
    TempDir dir;
    atomic_write(dir / "f.txt", "one");
    atomic_write(dir / "f.txt", "two");
    std::size_t files = 0;
    for (auto& e : std::filesystem::directory_iterator(dir.path())) files += e.is_regular_file();
    CHECK(files == 1);
}

}

TEST_SUITE("util") {

TEST_CASE("parallel_for covers every index once and rethrows") {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(1000, 4, [&](std::size_t i) { hits[i]++; });
    bool once = true;
    for (auto& h : hits) once &= h.load() == 1;
    CHECK(once);
    CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                        if (i == 7) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
    parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
}

TEST_CASE("thread count resolution") {
    CHECK(thread_count(3) == 3);
    ::setenv("FLASH_THREADS", "2", 1);
    CHECK(thread_count() == 2);
    ::setenv("FLASH_THREADS", "two", 1);
    CHECK_THROWS_AS(thread_count(), std::invalid_argument);
    ::unsetenv("FLASH_THREADS");
    CHECK(thread_count() >= 1);
}

TEST_CASE("svg writers") {
    std::string chart = svg_line_chart("Loss", "epoch", "L1", {{"train", {{0, 1.0}, {1, 0.5}, {2, 0.25}}}});
    CHECK(chart.find("<svg") != std::string::npos);
    CHECK(chart.find("<polyline") != std::string::npos);
    CHECK(chart.find("train") != std::string::npos);
    std::string heat = svg_heatmap("std", {0.0, 1.0, 2.0, 3.0}, 2, 2);
    CHECK(heat.find("<rect") != std::string::npos);
    CHECK_THROWS(svg_heatmap("bad", {1.0}, 2, 2));
}

}
