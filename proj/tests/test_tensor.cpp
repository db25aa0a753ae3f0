#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "wnet/tensor.hpp"

using namespace wnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path dir;
    TempDir() {
        dir = fs::temp_directory_path() / ("wnet_tensor_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }
    std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("load_pnm parses P5 and scales by 255") {
    TempDir td;
    std::string p = td / "a.pgm";
    write_bytes(p, std::string("P5\n2 2\n255\n") + std::string("\x00\xff\x00\xff", 4));
    ImageTensor img = load_pnm(p);
    CHECK(img.height == 2);
    CHECK(img.width == 2);
    CHECK(img.channels == 1);
    CHECK(img.data[0] == 0.0);
    CHECK(img.data[1] == 1.0);
    CHECK(img.data[2] == 0.0);
    CHECK(img.data[3] == 1.0);
}

TEST_CASE("load_pnm parses P6 all-zero 1x1") {
    TempDir td;
    std::string p = td / "a.ppm";
    write_bytes(p, std::string("P6\n1 1\n255\n") + std::string(3, '\0'));
    ImageTensor img = load_pnm(p);
    CHECK(img.channels == 3);
    CHECK(img.data == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("load_pnm handles comments and reports byte offsets") {
    TempDir td;
    std::string p = td / "c.pgm";
    write_bytes(p, std::string("P5\n# a comment\n2 1\n255\n") + std::string(2, '\x40'));
    ImageTensor img = load_pnm(p);
    CHECK(img.width == 2);
    CHECK(img.data[0] == doctest::Approx(64.0 / 255.0));

    SUBCASE("bad magic") {
        std::string q = td / "bad.pgm";
        write_bytes(q, "P2\n2 2\n255\n");
        CHECK_THROWS_AS(load_pnm(q), FormatError);
    }
    SUBCASE("unsupported maxval names byte offset") {
        std::string q = td / "max.pgm";
        write_bytes(q, "P5\n2 2\n65535\n" + std::string(8, '\0'));
        try {
            load_pnm(q);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("at byte") != std::string::npos);
            CHECK(std::string(e.what()).find("maxval") != std::string::npos);
        }
    }
    SUBCASE("truncated payload") {
        std::string q = td / "trunc.pgm";
        write_bytes(q, std::string("P5\n4 4\n255\n") + std::string(7, '\0'));
        try {
            load_pnm(q);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("truncated") != std::string::npos);
        }
    }
}

TEST_CASE("save_pnm rounds to nearest byte") {
    TempDir td;
    ImageTensor img(1, 1, 1);
    img.data[0] = 0.5;
    std::string p = td / "half.pgm";
    save_pnm(img, p);
    std::ifstream f(p, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(static_cast<unsigned char>(all.back()) == 128);
}

TEST_CASE("save_pnm rejects bad shapes") {
    ImageTensor none;
    CHECK_THROWS_AS(save_pnm(none, "/tmp/never.pgm"), DataError);
    ImageTensor two(2, 2, 2);
    CHECK_THROWS_AS(save_pnm(two, "/tmp/never.pgm"), DataError);
}

TEST_CASE("pnm round trip is the identity on 8-bit-quantized tensors") {
    TempDir td;
    Rng rng(42);
    for (int trial = 0; trial < 30; ++trial) {
        int h = 1 + rng.next_int(12), w = 1 + rng.next_int(12);
        int c = rng.next_int(2) == 0 ? 1 : 3;
        ImageTensor img(h, w, c);
        for (auto& v : img.data) v = rng.next_int(256) / 255.0;
        std::string p = td / ("rt" + std::to_string(trial) + ".pnm");
        save_pnm(img, p);
        ImageTensor back = load_pnm(p);
        REQUIRE(back.channels == img.channels);
        REQUIRE(back.data.size() == img.data.size());
        for (size_t i = 0; i < img.data.size(); ++i) REQUIRE(back.data[i] == img.data[i]);
    }
}

TEST_CASE("label map round trip") {
    TempDir td;
    Rng rng(7);
    LabelMap lm(25, 20);
    for (auto& l : lm.labels) l = rng.next_int(500);
    std::string p = td / "labels.pgm";
    save_label_map(lm, p);
    LabelMap back = load_label_map(p);
    CHECK(back.labels == lm.labels);

    SUBCASE("all-zero map round-trips") {
        LabelMap z(3, 3);
        save_label_map(z, p);
        CHECK(load_label_map(p).labels == z.labels);
    }
    SUBCASE("label above 65535 is rejected") {
        LabelMap big(1, 1);
        big.labels[0] = 70000;
        CHECK_THROWS_AS(save_label_map(big, p), DataError);
    }
    SUBCASE("8-bit maxval is rejected as a label map") {
        write_bytes(p, std::string("P5\n1 1\n255\n") + std::string(1, '\0'));
        CHECK_THROWS_AS(load_label_map(p), FormatError);
    }
}

TEST_CASE("bsds seg parsing") {
    TempDir td;
    SUBCASE("two-run file") {
        std::string p = td / "two.seg";
        write_bytes(p, "width 2\nheight 1\nsegments 2\ndata\n0 0 0 0\n1 0 1 1\n");
        LabelMap lm = load_bsds_seg(p);
        CHECK(lm.width == 2);
        CHECK(lm.height == 1);
        CHECK(lm.labels == std::vector<int>{0, 1});
    }
    SUBCASE("overlapping runs raise with coordinates") {
        std::string p = td / "overlap.seg";
        write_bytes(p, "width 2\nheight 1\nsegments 1\ndata\n0 0 0 1\n0 0 1 1\n");
        CHECK_THROWS_AS(load_bsds_seg(p), DataError);
    }
    SUBCASE("uncovered pixel raises") {
        std::string p = td / "gap.seg";
        write_bytes(p, "width 2\nheight 1\nsegments 1\ndata\n0 0 0 0\n");
        try {
            load_bsds_seg(p);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("(0,1)") != std::string::npos);
        }
    }
    SUBCASE("full BSDS header layout parses and matches declared segments") {
        std::string p = td / "full.seg";
        std::string text =
            "format ascii cr\n"
            "date Sat Mar 10 15:00:00 2001\n"
            "image 12003\n"
            "user 1102\n"
            "width 4\n"
            "height 3\n"
            "segments 3\n"
            "gray 0\n"
            "invert 0\n"
            "flipflop 0\n"
            "data\n"
            "0 0 0 1\n"
            "1 0 2 3\n"
            "0 1 0 0\n"
            "2 1 1 3\n"
            "2 2 0 3\n";
        write_bytes(p, text);
        LabelMap lm = load_bsds_seg(p);
        LabelMap compacted = lm;
        CHECK(compacted.compact() == 3);
        CHECK(lm.at(0, 0) == 0);
        CHECK(lm.at(0, 2) == 1);
        CHECK(lm.at(2, 3) == 2);
    }
}

TEST_CASE("rng streams are reproducible and serializable") {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
    auto snapshot = a.state();
    double x = a.next_double();
    Rng c(0);
    c.set_state(snapshot);
    CHECK(c.next_double() == x);

    Rng n(5);
    double mean = 0;
    for (int i = 0; i < 10000; ++i) mean += n.normal();
    CHECK(std::abs(mean / 10000) < 0.05);
}

TEST_CASE("label map compact relabels in first-appearance order") {
    LabelMap lm(1, 5);
    lm.labels = {7, 3, 7, 9, 3};
    CHECK(lm.compact() == 3);
    CHECK(lm.labels == std::vector<int>{0, 1, 0, 2, 1});
}

TEST_CASE("resize and argmax helpers") {
    ImageTensor img(2, 2, 1);
    img.data = {0.0, 1.0, 0.0, 1.0};
    ImageTensor up = resize_bilinear(img, 4, 4);
    CHECK(up.height == 4);
    CHECK(up.at(0, 0, 0) == doctest::Approx(0.0));
    CHECK(up.at(0, 3, 0) == doctest::Approx(1.0));

    SoftSegmentation q(1, 2, 2);
    q.probs = {0.5, 0.5, 0.2, 0.8};
    LabelMap am = argmax_labels(q);
    CHECK(am.labels[0] == 0);  // exact tie goes to class 0
    CHECK(am.labels[1] == 1);

    LabelMap lm(2, 2);
    lm.labels = {0, 1, 2, 3};
    LabelMap big = upsample_nearest(lm, 4, 4);
    CHECK(big.at(0, 0) == 0);
    CHECK(big.at(3, 3) == 3);
}
