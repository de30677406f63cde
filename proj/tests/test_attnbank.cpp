#include "mixsa/attnbank.hpp"
#include "mixsa/common.hpp"
#include "mixsa/mock_backend.hpp"

#include <doctest.h>

using namespace mixsa;

namespace {

StoredTensor tensor(float seed, int heads = 2) {
    StoredTensor t;
    for (int h = 0; h < heads; ++h) {
        Eigen::MatrixXf m(3, 4);
        for (int i = 0; i < m.size(); ++i) m.data()[i] = seed + h + 0.25f * i;
        t.push_back(m);
    }
    return t;
}

AttentionBank small_bank() {
    BankMeta meta;
    meta.schedule_hash = 0xabcdef;
    meta.sites = {{10, Stage::decoder}, {11, Stage::decoder}};
    meta.source_hashes[BankSource::reference] = "r";
    AttentionBank bank(meta);
    for (int t : {20, 40})
        for (int site : {10, 11}) {
            for (auto kind : {TensorKind::q, TensorKind::k, TensorKind::v})
                bank.record({t, site, kind, BankSource::reference}, tensor(t + site));
            bank.record({t, site, TensorKind::q, BankSource::color}, tensor(-t));
            bank.record({t, site, TensorKind::q, BankSource::contour}, tensor(2 * t));
        }
    return bank;
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error");
    return ErrorKind::io;
}

}  // namespace

TEST_CASE("record and lookup") {
    AttentionBank bank = small_bank();
    CHECK(bank.size() == 20);
    CHECK(bank.count(BankSource::reference, TensorKind::k) == 4);
    CHECK(bank.lookup({40, 11, TensorKind::q, BankSource::color})[0](0, 0) == -40.0f);
    CHECK(kind_of([&] { bank.record({20, 10, TensorKind::q, BankSource::color}, tensor(0)); }) ==
          ErrorKind::duplicate_key);
    CHECK(kind_of([&] { bank.lookup({60, 10, TensorKind::q, BankSource::color}); }) == ErrorKind::missing_key);
}

TEST_CASE("serialization is byte-reproducible") {
    const AttentionBank bank = small_bank();
    const auto bytes = serialize(bank);
    const AttentionBank back = deserialize(bytes);
    CHECK(back == bank);
    CHECK(serialize(back) == bytes);
    CHECK(back.meta() == bank.meta());
}

TEST_CASE("corrupt caches are rejected") {
    auto bytes = serialize(small_bank());
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK(kind_of([&] { deserialize(bad_magic); }) == ErrorKind::corrupt_header);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 7);
    CHECK_THROWS_AS(deserialize(truncated), Error);
}

TEST_CASE("cache files round trip") {
    const auto path = std::filesystem::temp_directory_path() / "mixsa_bank_test.msab";
    const AttentionBank bank = small_bank();
    save_cache(bank, path);
    CHECK(load_cache(path) == bank);
    std::filesystem::remove(path);
}

TEST_CASE("schedule binding and completeness") {
    const AttentionBank bank = small_bank();
    CHECK_NOTHROW(bank.require_schedule(0xabcdef));
    CHECK(kind_of([&] { bank.require_schedule(0xabcdee); }) == ErrorKind::hash_mismatch);

    const std::vector<int> ts{20, 40}, sites{10, 11};
    CHECK_NOTHROW(bank.validate_complete(ts, sites));
    const std::vector<int> more{20, 40, 60};
    try {
        bank.validate_complete(more, sites);
        FAIL("expected missing key");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::missing_key);
        CHECK(std::string(e.what()).find("60") != std::string::npos);
    }
}

TEST_CASE("capture records only selected kinds at selected sites") {
    MockBackend backend;
    AttentionBank bank;
    CaptureController capture(bank, BankSource::reference, {TensorKind::q, TensorKind::v}, {10, 11});
    LatentGrid z(4, 16, 16, 0.1);
    for (std::size_t i = 0; i < z.size(); ++i) z.values[i] = 0.01 * static_cast<double>(i % 13);
    const LatentGrid with = backend.predict_noise(z, 500, &capture, 7.5);
    CHECK(bank.size() == 4);
    CHECK(bank.contains({500, 10, TensorKind::v, BankSource::reference}));
    CHECK_FALSE(bank.contains({500, 10, TensorKind::k, BankSource::reference}));
    CHECK(with == backend.predict_noise(z, 500, nullptr, 7.5));
}
