#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ssvif/imageio.hpp"
#include "testutil.hpp"

using namespace ssvif;
namespace fs = std::filesystem;

namespace {

std::vector<uint8_t> bytes_of(const std::string& s) {
    return std::vector<uint8_t>(s.begin(), s.end());
}

fs::path temp_dir() {
    auto p = fs::temp_directory_path() / "ssvif_imageio_test";
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("pgm parse hand case") {
    std::string header = "P5 2 2 255 ";
    std::vector<uint8_t> file = bytes_of(header);
    file.insert(file.end(), {0, 255, 128, 64});
    RawImage img = parse_pnm(file);
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    CHECK(img.channels == 1);

    // values scale by 1/255
    Tensor t = Tensor::from_vector({1, 2, 2}, {0.0f, 1.0f, 128.0f / 255.0f, 64.0f / 255.0f});
    CHECK(img.bytes[2] == 128);
    CHECK(float(img.bytes[3]) / 255.0f == doctest::Approx(0.25098).epsilon(1e-4));
    CHECK(t.at({0, 1, 0}) == doctest::Approx(0.50196).epsilon(1e-4));
}

TEST_CASE("pnm parse errors carry byte offsets") {
    CHECK_THROWS_AS(parse_pnm(bytes_of("P4 2 2 255 xxxx")), ParseError);
    CHECK_THROWS_AS(parse_pnm(bytes_of("P5 2 2 65535 ")), ParseError);
    // truncated payload
    std::vector<uint8_t> trunc = bytes_of("P5 2 2 255 ");
    trunc.push_back(7);
    CHECK_THROWS_AS(parse_pnm(trunc), ParseError);
    // comments in the header are fine
    std::vector<uint8_t> with_comment = bytes_of("P5 # hi\n2 2 255\n");
    with_comment.insert(with_comment.end(), {1, 2, 3, 4});
    CHECK(parse_pnm(with_comment).width == 2);
    try {
        parse_pnm(bytes_of("P5 2 2 65535 "));
        FAIL("expected throw");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
}

TEST_CASE("quantization endpoints and round trip") {
    CHECK(quantize_unit(1.0f) == 255);
    CHECK(quantize_unit(0.0f) == 0);
    CHECK(quantize_unit(0.5f) == 128); // round(127.5) away from zero

    // byte -> float -> byte is the identity for all 256 values
    for (int b = 0; b < 256; ++b) {
        const float v = float(b) / 255.0f;
        CHECK(quantize_unit(v) == b);
    }
}

TEST_CASE("save/load round trips") {
    auto dir = temp_dir();
    Rng rng(21);
    auto t = tensor_cast<float>(testutil::random_tensor(rng, {3, 5, 7}, 0.0, 1.0, false));
    const auto path = (dir / "rt.ppm").string();
    save_ppm(t, path);
    Tensor back = load_ppm(path);
    for (size_t i = 0; i < t.values().size(); ++i) {
        CHECK(std::abs(back.values()[i] - t.values()[i]) <= 1.0f / 255.0f);
    }
    // exact codec round trip: load(save(load(x))) == load(x)
    save_ppm(back, (dir / "rt2.ppm").string());
    Tensor back2 = load_ppm((dir / "rt2.ppm").string());
    CHECK(back2.values() == back.values());

    // out-of-range rejects
    auto bad = Tensor::filled({3, 2, 2}, 1.5f);
    CHECK_THROWS_AS(save_ppm(bad, (dir / "bad.ppm").string()), ContractError);

    // zero image
    save_pgm(Tensor::zeros({1, 3, 3}), (dir / "z.pgm").string());
    Tensor z = load_pgm((dir / "z.pgm").string());
    for (float v : z.values()) CHECK(v == 0.0f);
}

TEST_CASE("ycbcr conversions") {
    // gray pixel maps to (v, 0.5, 0.5)
    auto gray = Tensor::filled({3, 1, 1}, 0.37f);
    auto ycc = rgb_to_ycbcr(gray);
    CHECK(ycc.at({0, 0, 0}) == doctest::Approx(0.37).epsilon(1e-5));
    CHECK(ycc.at({1, 0, 0}) == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(ycc.at({2, 0, 0}) == doctest::Approx(0.5).epsilon(1e-5));

    // pure red
    auto red = Tensor::from_vector({3, 1, 1}, {1.0f, 0.0f, 0.0f});
    auto ycc_r = rgb_to_ycbcr(red);
    CHECK(ycc_r.at({0, 0, 0}) == doctest::Approx(0.299).epsilon(1e-5));
    CHECK(ycc_r.at({2, 0, 0}) == doctest::Approx(0.5 + 0.701 * 0.713).epsilon(1e-5));

    // round trip on 1e4 random pixels within 1e-3
    Rng rng(5);
    const int n = 10000;
    std::vector<float> px(size_t(3 * n));
    for (auto& v : px) v = float(rng.uniform());
    auto img = Tensor::from_vector({3, 100, 100}, std::move(px));
    auto rt = ycbcr_to_rgb(rgb_to_ycbcr(img));
    double max_err = 0;
    for (size_t i = 0; i < rt.values().size(); ++i) {
        max_err = std::max(max_err, double(std::abs(rt.values()[i] - img.values()[i])));
    }
    CHECK(max_err < 1e-3);
}

TEST_CASE("ycbcr conversion is differentiable") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        auto x = testutil::random_tensor(rng, {3, 4, 4}, 0.05, 0.95);
        auto proj = testutil::random_tensor(rng, {3, 4, 4}, -1, 1, false);
        auto res = testutil::grad_check({x, proj}, [](const std::vector<TensorD>& in) {
            return sum(mul(rgb_to_ycbcr(in[0]), in[1]));
        });
        CHECK(res.ok());
    }
}

TEST_CASE("dataset split ratios and determinism") {
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("img" + std::to_string(i));
    auto s = split_dataset(ids, 42);
    CHECK(s.train.size() == 9);
    CHECK(s.val.size() == 1);

    auto s2 = split_dataset(ids, 42);
    CHECK(s.train == s2.train);
    CHECK(s.val == s2.val);

    std::vector<std::string> big;
    for (int i = 0; i < 100; ++i) big.push_back("x" + std::to_string(i));
    auto a = split_dataset(big, 1);
    auto b = split_dataset(big, 2);
    CHECK(a.train != b.train);

    // disjoint and covering
    std::vector<std::string> joined = s.train;
    joined.insert(joined.end(), s.val.begin(), s.val.end());
    std::sort(joined.begin(), joined.end());
    std::sort(ids.begin(), ids.end());
    CHECK(joined == ids);

    CHECK_THROWS_AS(split_dataset({"a", "b"}, 1), ContractError);
}

TEST_CASE("crops are aligned and reproducible") {
    Rng rng(9);
    ImagePair pair;
    pair.id = "t";
    pair.vis = tensor_cast<float>(testutil::random_tensor(rng, {3, 8, 8}, 0, 1, false));
    Tensor ir1 = tensor_cast<float>(testutil::random_tensor(rng, {1, 8, 8}, 0, 1, false));
    pair.ir = concat_channels(ir1, concat_channels(ir1, ir1)).detach();
    pair.label.resize(64);
    for (int i = 0; i < 64; ++i) pair.label[size_t(i)] = i % 4;

    // identity crop
    Rng crop_rng(3);
    auto same = random_crop_pair(pair, 8, crop_rng);
    CHECK(same.vis.values() == pair.vis.values());
    CHECK(same.label == pair.label);

    // identical windows under a cloned rng
    Rng r1(77), r2(77);
    auto c1 = random_crop_pair(pair, 4, r1);
    auto c2 = random_crop_pair(pair, 4, r2);
    CHECK(c1.vis.values() == c2.vis.values());
    CHECK(c1.label == c2.label);

    // label alignment: crop window applied to labels matches values
    auto c3 = crop_pair(pair, 2, 3, 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            CHECK(c3.label[size_t(y * 4 + x)] == pair.label[size_t((y + 2) * 8 + (x + 3))]);
            CHECK(c3.vis.at({1, y, x}) == pair.vis.at({1, y + 2, x + 3}));
        }
    }

    CHECK_THROWS_AS(random_crop_pair(pair, 9, crop_rng), ContractError);
}
