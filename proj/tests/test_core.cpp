#include <doctest.h>

#include <filesystem>

#include "crsdiff/core/hash.hpp"
#include "crsdiff/core/image.hpp"
#include "crsdiff/core/rng.hpp"
#include "crsdiff/core/serialize.hpp"
#include "crsdiff/core/tensor.hpp"

using namespace crsdiff;

TEST_CASE("rng is deterministic and reasonably distributed") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u32() == b.next_u32());

    Rng r(7);
    double sum = 0, sum2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double x = r.normal();
        sum += x;
        sum2 += x * x;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sum2 / n - 1.0) < 0.05);

    Rng u(9);
    int lo = 0;
    for (int i = 0; i < 10000; ++i)
        if (u.uniform() < 0.25) ++lo;
    CHECK(lo > 2200);
    CHECK(lo < 2800);
}

TEST_CASE("mix_seed decorrelates streams") {
    CHECK(mix_seed(1, 0) != mix_seed(1, 1));
    CHECK(mix_seed(1, 0) != mix_seed(2, 0));
    CHECK(mix_seed(5, 3) == mix_seed(5, 3));
}

TEST_CASE("tensor basics") {
    Tensorf t({2, 3});
    CHECK(t.numel() == 6);
    t.at(1, 2) = 5.0f;
    CHECK(t[5] == 5.0f);
    CHECK_THROWS_AS(t.reshaped({4, 2}), InputError);
    auto r = t.reshaped({3, 2});
    CHECK(r.at(2, 1) == 5.0f);
}

TEST_CASE("sha256 known vector") {
    CHECK(sha256_hex(std::string("abc")) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("png round trip") {
    auto dir = std::filesystem::temp_directory_path() / "crsdiff_png_test";
    std::filesystem::create_directories(dir);
    Rng rng(3);
    Tensorf img = Tensorf::uniform({3, 9, 13}, rng, 0.0f, 1.0f);
    auto path = (dir / "t.png").string();
    write_png(path, to_u8(img));
    auto back = from_u8(read_png(path));
    REQUIRE(back.shape == img.shape);
    for (int64_t i = 0; i < img.numel(); ++i)
        CHECK(std::abs(back[i] - img[i]) < 1.0f / 255.0f + 1e-6f);

    Tensorf gray = Tensorf::uniform({1, 5, 7}, rng, 0.0f, 1.0f);
    auto gpath = (dir / "g.png").string();
    write_png(gpath, to_u8(gray));
    auto gback = read_png(gpath);
    CHECK(gback.channels == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint round trip, corruption and kind mismatch") {
    auto dir = std::filesystem::temp_directory_path() / "crsdiff_ckpt_test";
    std::filesystem::create_directories(dir);
    auto path = (dir / "m.ckpt").string();

    Rng rng(11);
    Param<float> a(Tensorf::randn({3, 4}, rng));
    Param<float> b(Tensorf::randn({5}, rng));
    ParamCollector<float> pc;
    pc.add("a", a);
    pc.add("b", b);
    save_checkpoint(path, "demo", {{"note", 1}}, pc);

    Param<float> a2(Tensorf::zeros({3, 4}));
    Param<float> b2(Tensorf::zeros({5}));
    ParamCollector<float> pc2;
    pc2.add("a", a2);
    pc2.add("b", b2);
    auto meta = load_checkpoint(path, "demo", pc2);
    CHECK(meta["note"] == 1);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a2.value[i] == a.value[i]);

    CHECK_THROWS_AS(load_checkpoint(path, "other", pc2), IntegrityError);

    // flip one byte in the blob
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(40);
        char c;
        f.seekg(40);
        f.read(&c, 1);
        c ^= 0x5a;
        f.seekp(40);
        f.write(&c, 1);
    }
    CHECK_THROWS_AS(load_checkpoint(path, "demo", pc2), IntegrityError);
    std::filesystem::remove_all(dir);
}
