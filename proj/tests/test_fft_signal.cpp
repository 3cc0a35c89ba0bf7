#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "dafd/errors.hpp"
#include "dafd/fft.hpp"
#include "dafd/rng.hpp"
#include "dafd/signal_prep.hpp"
#include "support/oracles.hpp"

using namespace dafd;

namespace {

RawSignal ramp_signal(size_t n) {
    RawSignal s;
    s.origin = "ramp";
    s.samples.resize(n);
    for (size_t i = 0; i < n; ++i) s.samples[i] = (double)i;
    return s;
}

}  // namespace

TEST_CASE("constant window transforms to a pure DC line") {
    const double c = 0.37;
    std::vector<double> w(1024, c);
    auto mags = fft_half_magnitudes(w);
    CHECK(mags[0] == doctest::Approx(1024.0 * c).epsilon(1e-12));
    for (size_t k = 1; k < mags.size(); ++k) CHECK(std::abs(mags[k]) < 1e-9);
}

TEST_CASE("pure cosine lands in its bin with half amplitude times n") {
    std::vector<double> w(1024);
    for (size_t i = 0; i < 1024; ++i)
        w[i] = std::cos(2.0 * std::numbers::pi * 5.0 * (double)i / 1024.0);
    auto mags = fft_half_magnitudes(w);
    CHECK(mags[5] == doctest::Approx(512.0).epsilon(1e-12));
    for (size_t k = 0; k < mags.size(); ++k)
        if (k != 5) CHECK(std::abs(mags[k]) < 1e-9);
}

TEST_CASE("radix-2 magnitudes match the naive DFT oracle") {
    SeededRng rng(77);
    for (int round = 0; round < 10; ++round) {
        std::vector<double> w(1024);
        for (auto& v : w) v = rng.uniform(-1.0, 1.0);
        const auto fast = fft_magnitudes(w);
        const auto slow = dafd::testing::naive_dft_magnitudes(w);
        double max_dev = 0.0;
        for (size_t k = 0; k < 1024; ++k) max_dev = std::max(max_dev, std::abs(fast[k] - slow[k]));
        CHECK(max_dev < 1e-6);
    }
}

TEST_CASE("parseval identity holds on the full spectrum") {
    SeededRng rng(78);
    std::vector<double> w(1024);
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    const auto mags = fft_magnitudes(w);
    double freq = 0.0, time = 0.0;
    for (double m : mags) freq += m * m;
    for (double v : w) time += v * v;
    CHECK(freq == doctest::Approx(1024.0 * time).epsilon(1e-9));
}

TEST_CASE("fft length must be a power of two") {
    std::vector<double> w(1000, 0.0);
    CHECK_THROWS_AS(fft_features(w), UsageError);
    std::vector<std::complex<double>> a(12);
    CHECK_THROWS_AS(fft_radix2(a), UsageError);
}

TEST_CASE("truncate keeps exactly the first samples") {
    RawSignal s = ramp_signal(121556);
    RawSignal t = truncate(s);
    CHECK(t.samples.size() == 120000);
    CHECK(t.samples[0] == 0.0);
    CHECK(t.samples[119999] == 119999.0);

    RawSignal exact = truncate(ramp_signal(120000));
    CHECK(exact.samples.size() == 120000);
}

TEST_CASE("truncate names the deficit for short signals") {
    try {
        truncate(ramp_signal(100000));
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("20000") != std::string::npos);
        CHECK(msg.find("ramp") != std::string::npos);
    }
}

TEST_CASE("window stride follows the published arithmetic") {
    RawSignal s = ramp_signal(120000);
    const auto windows = window(s);
    REQUIRE(windows.size() == 200);
    // stride = floor((120000 - 1024) / 199) = 597
    CHECK(windows[0][0] == 0.0);
    CHECK(windows[1][0] == 597.0);
    CHECK(windows[199][0] == doctest::Approx(199.0 * 597.0));
    CHECK(windows[199][1023] == doctest::Approx(199.0 * 597.0 + 1023.0));
    CHECK(199.0 * 597.0 + 1024.0 <= 120000.0);
    // Window 0 is the literal head of the signal.
    for (size_t i = 0; i < 1024; ++i) CHECK(windows[0][i] == (double)i);
}

TEST_CASE("degenerate single window equals the whole signal") {
    RawSignal s = ramp_signal(1024);
    const auto windows = window(s, 1, 1024);
    REQUIRE(windows.size() == 1);
    for (size_t i = 0; i < 1024; ++i) CHECK(windows[0][i] == (double)i);
}

TEST_CASE("window rejects signals too short for a positive stride") {
    CHECK_THROWS_AS(window(ramp_signal(1024), 5, 1024), DataError);
}

TEST_CASE("normalize composes multiplicatively and rejects bad factors") {
    std::vector<double> x = {512.0, 64.0, 8.0, 1.0};
    std::vector<double> a = x, b = x;
    normalize(a, 8.0);
    normalize(a, 64.0);
    normalize(b, 512.0);
    for (size_t i = 0; i < x.size(); ++i) CHECK(a[i] == b[i]);

    std::vector<double> c(4, 512.0);
    normalize(c, 512.0);
    for (double v : c) CHECK(v == 1.0);

    std::vector<double> d = x;
    CHECK_THROWS_AS(normalize(d, 2.0), ConfigError);
    std::vector<double> e = x;
    normalize(e, 1.0);
    for (size_t i = 0; i < x.size(); ++i) CHECK(e[i] == x[i]);
}

namespace {

std::vector<RawSignal> ten_class_signals(size_t len = 120000) {
    std::vector<RawSignal> signals;
    SeededRng rng(99);
    for (int c = 0; c < 10; ++c) {
        RawSignal s;
        s.origin = "class" + std::to_string(c);
        s.class_label = c;
        s.source_load = 1;
        s.samples.resize(len);
        for (auto& v : s.samples) v = rng.uniform(-1.0, 1.0);
        signals.push_back(std::move(s));
    }
    return signals;
}

}  // namespace

TEST_CASE("build_dataset lays rows out class-major") {
    auto signals = ten_class_signals();
    WindowedDataset ds = build_dataset(signals, 8.0);
    CHECK(ds.num_rows == 2000);
    CHECK(ds.num_features == 512);
    std::vector<int> counts(10, 0);
    for (int label : ds.labels) ++counts[(size_t)label];
    for (int count : counts) CHECK(count == 200);

    // Row c*200 + w is fft(window w of class c) / factor.
    const RawSignal truncated = truncate(signals[3]);
    const auto windows = window(truncated);
    auto feats = fft_features(windows[17]);
    normalize(feats, 8.0);
    const double* row = ds.row(3 * 200 + 17);
    for (size_t j = 0; j < 512; ++j) CHECK(row[j] == feats[j]);
}

TEST_CASE("build_dataset rejects duplicates and reports missing classes") {
    auto signals = ten_class_signals();
    signals[4].class_label = 5;
    CHECK_THROWS_AS(build_dataset(signals, 1.0), DataError);

    auto partial = ten_class_signals();
    partial.erase(partial.begin() + 2);
    partial.erase(partial.begin() + 6);
    try {
        build_dataset(partial, 1.0);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2") != std::string::npos);
        CHECK(msg.find("7") != std::string::npos);
    }
}

TEST_CASE("dataset CSV round-trips bit-exactly") {
    auto signals = ten_class_signals();
    WindowedDataset ds = build_dataset(signals, 64.0, DomainTag::kTarget, 3);
    const std::string path = std::filesystem::temp_directory_path() / "dafd_ds_test.csv";
    save_dataset_csv(ds, path);
    WindowedDataset back = load_dataset_csv(path);
    CHECK(back.num_rows == ds.num_rows);
    CHECK(back.num_features == ds.num_features);
    CHECK(back.labels == ds.labels);
    for (size_t i = 0; i < ds.features.size(); ++i) CHECK(back.features[i] == ds.features[i]);
    std::filesystem::remove(path);
}

TEST_CASE("pipeline is deterministic end to end") {
    auto signals = ten_class_signals();
    WindowedDataset a = build_dataset(signals, 8.0, DomainTag::kSource, 5);
    WindowedDataset b = build_dataset(signals, 8.0, DomainTag::kSource, 5);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
}

TEST_CASE("downsampling keeps every fourth sample") {
    RawSignal s = ramp_signal(1000);
    s.sampling_rate_hz = 48000;
    RawSignal d = downsample_to_12khz(s);
    CHECK(d.sampling_rate_hz == 12000);
    CHECK(d.samples.size() == 250);
    CHECK(d.samples[1] == 4.0);
    RawSignal f = downsample_to_12khz(s, true);
    CHECK(f.samples.size() == 250);
}
