#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "eaef/config.hpp"
#include "eaef/io.hpp"

using namespace eaef;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    return fs::temp_directory_path() / name;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
    std::ofstream f(p, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("tensor dumps round-trip bitwise") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> d(-10.0f, 10.0f);
    for (auto dims : std::vector<std::vector<int>>{{4}, {2, 3}, {1, 2, 3, 4}}) {
        Tensor t(dims);
        for (auto& v : t.v) v = d(rng);
        const fs::path p = temp_file("eaef_io_roundtrip.eaet");
        write_tensor(p.string(), t);
        Tensor back = read_tensor(p.string());
        CHECK(back.dims == t.dims);
        CHECK(back.v == t.v);  // bitwise
        fs::remove(p);
    }
}

TEST_CASE("dump header layout is stable") {
    Tensor t({2, 3});
    t.v = {1, 2, 3, 4, 5, 6};
    const fs::path p = temp_file("eaef_io_header.eaet");
    write_tensor(p.string(), t);
    auto bytes = slurp(p);
    REQUIRE(bytes.size() == 4 + 4 + 2 * 4 + 6 * 4);
    CHECK(bytes[0] == 'E');
    CHECK(bytes[1] == 'A');
    CHECK(bytes[2] == 'E');
    CHECK(bytes[3] == 'T');
    CHECK(bytes[4] == 1);  // version
    CHECK(bytes[5] == 0);  // f32
    CHECK(bytes[6] == 2);  // ndim
    CHECK(bytes[7] == 0);  // pad
    // little-endian u32 dims
    CHECK(static_cast<unsigned char>(bytes[8]) == 2);
    CHECK(static_cast<unsigned char>(bytes[12]) == 3);
    fs::remove(p);
}

TEST_CASE("malformed dumps name the failing byte offset") {
    Tensor t({2, 2});
    t.v = {1, 2, 3, 4};
    const fs::path p = temp_file("eaef_io_malformed.eaet");
    write_tensor(p.string(), t);
    auto bytes = slurp(p);

    SUBCASE("bad magic") {
        auto bad = bytes;
        bad[0] = 'X';
        spit(p, bad);
        CHECK_THROWS_WITH_AS(read_tensor(p.string()),
                             doctest::Contains("at byte offset 0"), FormatError);
    }
    SUBCASE("bad version") {
        auto bad = bytes;
        bad[4] = 9;
        spit(p, bad);
        CHECK_THROWS_WITH_AS(read_tensor(p.string()),
                             doctest::Contains("at byte offset 4"), FormatError);
    }
    SUBCASE("bad dtype") {
        auto bad = bytes;
        bad[5] = 7;
        spit(p, bad);
        CHECK_THROWS_WITH_AS(read_tensor(p.string()),
                             doctest::Contains("at byte offset 5"), FormatError);
    }
    SUBCASE("truncated payload") {
        auto bad = bytes;
        bad.resize(bad.size() - 6);
        spit(p, bad);
        CHECK_THROWS_WITH_AS(read_tensor(p.string()), doctest::Contains("truncated payload"),
                             FormatError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_tensor((p.string() + ".does_not_exist")), FormatError);
    }
    fs::remove(p);
}

TEST_CASE("config serialization round-trips exactly") {
    RunConfig c;
    c.seed = 987654321;
    c.lr = 0.0123457f;
    c.gamma = 0.875f;
    c.ablation = "acb_only";
    c.scene = "modality_split";
    c.interaction = false;
    c.ignore_background = true;
    c.gradcheck_channels = "2,7,9";
    c.out_dir = "runs/x1";

    RunConfig back = parse_config(serialize_config(c));
    CHECK(back == c);
    CHECK(config_hash(back) == config_hash(c));

    RunConfig other = c;
    other.lr = 0.02f;
    CHECK(config_hash(other) != config_hash(c));
}

TEST_CASE("config parsing accepts comments and blank lines") {
    RunConfig c = parse_config("# a comment\n\nseed=42\nlr=0.5\n  epochs = 3 \n");
    CHECK(c.seed == 42);
    CHECK(c.lr == 0.5f);
    CHECK(c.epochs == 3);
    CHECK(c.batch_size == RunConfig{}.batch_size);  // untouched keys keep defaults
}

TEST_CASE("config parsing rejects unknown keys and bad values with line numbers") {
    CHECK_THROWS_WITH_AS(parse_config("seed=1\nlerning_rate=0.1\n"),
                         doctest::Contains("line 2"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("epochs=twelve\n"), doctest::Contains("bad integer"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("lr=fast\n"), doctest::Contains("bad float"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("interaction=maybe\n"), doctest::Contains("bad bool"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("seed\n"), doctest::Contains("expected key=value"),
                         ConfigError);
}

TEST_CASE("config validation guards the numeric ranges") {
    RunConfig c;
    validate_config(c);  // defaults are fine

    auto expect_bad = [](RunConfig bad) { CHECK_THROWS_AS(validate_config(bad), ConfigError); };
    RunConfig c1 = c;
    c1.lr = 0.0f;
    expect_bad(c1);
    RunConfig c2 = c;
    c2.image_size = 48;
    expect_bad(c2);
    RunConfig c3 = c;
    c3.ablation = "everything";
    expect_bad(c3);
    RunConfig c4 = c;
    c4.ce_smoothing = 1.0f;
    expect_bad(c4);
    RunConfig c5 = c;
    c5.num_classes = 1;
    expect_bad(c5);
}

TEST_CASE("config files load from disk") {
    const fs::path p = temp_file("eaef_config_load.cfg");
    {
        std::ofstream f(p);
        f << "seed=5\nablation=baseline\n";
    }
    RunConfig c = load_config(p.string());
    CHECK(c.seed == 5);
    CHECK(c.ablation == "baseline");
    fs::remove(p);
    CHECK_THROWS_AS(load_config(p.string()), ConfigError);
}

TEST_CASE("pgm and ppm writers emit valid headers") {
    const fs::path pgm = temp_file("eaef_io_test.pgm");
    const fs::path ppm = temp_file("eaef_io_test.ppm");
    std::vector<float> gray(12, 0.5f);
    gray[0] = 0.0f;
    gray[11] = 1.0f;
    write_pgm(pgm.string(), gray.data(), 3, 4);
    std::vector<float> color(3 * 4, 0.25f);
    write_ppm(ppm.string(), color.data(), 2, 2);

    auto gb = slurp(pgm);
    REQUIRE(gb.size() > 2);
    CHECK(gb[0] == 'P');
    CHECK(gb[1] == '5');
    auto cb = slurp(ppm);
    REQUIRE(cb.size() > 2);
    CHECK(cb[0] == 'P');
    CHECK(cb[1] == '6');
    fs::remove(pgm);
    fs::remove(ppm);
}

TEST_CASE("fusion state export writes a manifest and maps") {
    std::mt19937_64 rng(19);
    const int c = 4;
    EaefParams p = make_eaef_params<float>(c, rng);
    Tensor f_rgb({1, c, 4, 4}), f_t({1, c, 4, 4});
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    for (auto& v : f_rgb.v) v = d(rng);
    for (auto& v : f_t.v) v = d(rng);
    FusionState s = eaef_forward(f_rgb, f_t, p);

    const fs::path dir = fs::temp_directory_path() / "eaef_state_export";
    fs::remove_all(dir);
    export_fusion_state(s, dir.string());
    CHECK(fs::exists(dir / "manifest.txt"));
    CHECK(fs::exists(dir / "case_labels.txt"));
    bool any_eaet = false, any_pgm = false;
    for (auto& e : fs::directory_iterator(dir)) {
        any_eaet = any_eaet || e.path().extension() == ".eaet";
        any_pgm = any_pgm || e.path().extension() == ".pgm";
    }
    CHECK(any_eaet);
    CHECK(any_pgm);
    fs::remove_all(dir);
}
