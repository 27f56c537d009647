#include "meco/activation_store.hpp"
#include "meco/error.hpp"
#include "meco/io_util.hpp"
#include "meco/rng.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace meco;
using namespace meco::store;
using meco::testing::TempDir;

namespace {

ContainerHeader make_header(std::uint32_t d = 4, std::uint32_t L = 3) {
    return {"test-model", "meta-cognition", d, L, 0};
}

ActivationRecord make_record(Rng & rng, std::uint32_t d, std::uint32_t L, bool inference) {
    ActivationRecord r;
    r.query_id = rng.next();
    r.truncation_index = 1 + static_cast<std::uint32_t>(rng.below(50));
    r.layer_index = static_cast<std::uint32_t>(rng.below(L));
    r.variant = rng.below(2) ? Variant::Experimental : Variant::Reference;
    r.role = inference ? Role::InferenceFirstToken : Role::TrainContrastive;
    if (inference) {
        r.first_token_text = rng.below(2) ? " Yes" : "no\xc3\xa9";
    }
    r.vector.resize(d);
    for (auto & x : r.vector) {
        x = static_cast<float>(rng.normal() * 1e3);
    }
    return r;
}

std::string serialize(ContainerHeader h, const std::vector<ActivationRecord> & recs) {
    std::ostringstream os;
    write_records(h, recs, os);
    return os.str();
}

Container parse(const std::string & bytes) {
    std::istringstream is(bytes);
    return read_records(is);
}

} // namespace

TEST_CASE("stream round trip preserves every field and bit") {
    Rng rng(1);
    std::vector<ActivationRecord> recs;
    for (int i = 0; i < 200; ++i) {
        recs.push_back(make_record(rng, 4, 3, i % 3 == 0));
    }
    recs[5].vector[0] = -0.0f;
    recs[6].vector[1] = std::numeric_limits<float>::denorm_min();
    const auto bytes = serialize(make_header(), recs);
    const auto c = parse(bytes);
    CHECK(c.header.model_id == "test-model");
    CHECK(c.header.concept_name == "meta-cognition");
    CHECK(c.header.count == recs.size());
    REQUIRE(c.records.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(c.records[i] == recs[i]);
    }
    CHECK(std::signbit(c.records[5].vector[0]));
}

TEST_CASE("layout: magic, length prefix, JSON header, fixed record size") {
    Rng rng(2);
    std::vector<ActivationRecord> recs{make_record(rng, 4, 3, false), make_record(rng, 4, 3, true)};
    auto h = make_header();
    const auto bytes = serialize(h, recs);
    REQUIRE(bytes.size() > 12);
    CHECK(bytes.substr(0, 8) == std::string("MACT1\0\0\0", 8));
    const auto len = io::load_u32(reinterpret_cast<const unsigned char *>(bytes.data() + 8));
    const auto json = bytes.substr(12, len);
    CHECK(json.find("\"dtype\":\"f32le\"") != std::string::npos);
    CHECK(json.find("\"count\":2") != std::string::npos);
    // fields appear in the documented order
    CHECK(json.find("model_id") < json.find("concept"));
    CHECK(json.find("concept") < json.find("\"d\""));

    const std::size_t rec0 = 20 + 4 * 4;
    const std::size_t rec1 = 20 + recs[1].first_token_text->size() + 4 * 4;
    CHECK(bytes.size() == 12 + len + rec0 + rec1);
    CHECK(record_bytes(recs[0]) == rec0);
    CHECK(record_bytes(recs[1]) == rec1);
    h.count = 2;
    CHECK(header_bytes(h) == 12 + len);

    // first record fields at their documented offsets
    const auto * p = reinterpret_cast<const unsigned char *>(bytes.data() + 12 + len);
    CHECK(io::load_u64(p) == recs[0].query_id);
    CHECK(io::load_u32(p + 8) == recs[0].truncation_index);
    CHECK(io::load_u32(p + 12) == recs[0].layer_index);
    CHECK(p[16] == static_cast<unsigned char>(recs[0].variant));
    CHECK(p[17] == 0);
    CHECK(io::load_u16(p + 18) == 0);
    CHECK(io::load_f32(p + 20) == recs[0].vector[0]);
}

TEST_CASE("truncation anywhere in a record is located at that record's start") {
    Rng rng(3);
    std::vector<ActivationRecord> recs;
    for (int i = 0; i < 5; ++i) {
        recs.push_back(make_record(rng, 4, 3, i == 2));
    }
    const auto bytes = serialize(make_header(), recs);
    auto h = make_header();
    h.count = recs.size();
    std::vector<std::size_t> starts{header_bytes(h)};
    for (const auto & r : recs) {
        starts.push_back(starts.back() + record_bytes(r));
    }
    REQUIRE(starts.back() == bytes.size());
    for (std::size_t cut = starts.front(); cut < bytes.size(); ++cut) {
        std::istringstream is(bytes.substr(0, cut));
        RecordReader reader(is);
        std::size_t got = 0;
        try {
            while (reader.next()) {
                ++got;
            }
            FAIL("truncated file read without error at cut " << cut);
        } catch (const CorruptionError & e) {
            // every complete record before the cut is still delivered
            CHECK(starts[got] <= cut);
            CHECK(cut < starts[got + 1]);
            CHECK(e.offset() == starts[got]);
        }
    }
}

TEST_CASE("bad magic, header and trailing bytes") {
    Rng rng(4);
    std::vector<ActivationRecord> recs{make_record(rng, 4, 3, false)};
    const auto bytes = serialize(make_header(), recs);

    auto bad_magic = bytes;
    bad_magic[4] = '2';
    CHECK_THROWS_AS(parse(bad_magic), FormatError);

    auto bad_len = bytes;
    bad_len[8] = static_cast<char>(0xFF);
    bad_len[9] = static_cast<char>(0xFF);
    bad_len[10] = static_cast<char>(0xFF);
    CHECK_THROWS_AS(parse(bad_len), FormatError);

    CHECK_THROWS_AS(parse(bytes.substr(0, 6)), FormatError);

    auto trailing = bytes + "x";
    try {
        parse(trailing);
        FAIL("trailing bytes accepted");
    } catch (const CorruptionError & e) {
        CHECK(e.offset() == bytes.size());
    }
}

TEST_CASE("invalid variant/role byte is corruption at the record start") {
    Rng rng(5);
    std::vector<ActivationRecord> recs{make_record(rng, 4, 3, false), make_record(rng, 4, 3, false)};
    auto bytes = serialize(make_header(), recs);
    auto h = make_header();
    h.count = 2;
    const std::size_t second = header_bytes(h) + record_bytes(recs[0]);
    bytes[second + 16] = 7;
    std::istringstream is(bytes);
    RecordReader reader(is);
    CHECK(reader.next().has_value());
    try {
        reader.next();
        FAIL("bad variant accepted");
    } catch (const CorruptionError & e) {
        CHECK(e.offset() == second);
    }
}

TEST_CASE("writer rejects invalid records before emitting anything") {
    Rng rng(6);
    TempDir tmp;
    std::vector<ActivationRecord> recs{make_record(rng, 4, 3, false), make_record(rng, 4, 3, false)};

    SUBCASE("wrong dimension") { recs[1].vector.resize(5); }
    SUBCASE("layer out of range") { recs[1].layer_index = 3; }
    SUBCASE("k = 0") { recs[1].truncation_index = 0; }
    SUBCASE("inference without token") {
        recs[1].role = Role::InferenceFirstToken;
        recs[1].first_token_text.reset();
    }
    SUBCASE("train with token") { recs[1].first_token_text = "Yes"; }

    std::ostringstream os;
    CHECK_THROWS_AS(write_records(make_header(), recs, os), Error);
    CHECK(os.str().empty());
    const auto path = tmp / "x.mact";
    CHECK_THROWS_AS(write_records(make_header(), recs, path), Error);
    CHECK_FALSE(std::filesystem::exists(path));
    CHECK(std::distance(std::filesystem::directory_iterator(tmp.path()), {}) == 0);
}

TEST_CASE("file and debug JSONL round trips agree") {
    Rng rng(7);
    TempDir tmp;
    std::vector<ActivationRecord> recs;
    for (int i = 0; i < 50; ++i) {
        recs.push_back(make_record(rng, 3, 2, i % 4 == 0));
    }
    const auto bin = tmp / "a.mact";
    const auto dbg = tmp / "a.jsonl";
    write_records(make_header(3, 2), recs, bin);
    write_records_jsonl(make_header(3, 2), recs, dbg);
    const auto a = read_records(bin);
    const auto b = read_records_jsonl(dbg);
    CHECK(a.header == b.header);
    CHECK(a.records == recs);
    CHECK(b.records == recs);
    CHECK_THROWS_AS(read_records(tmp / "missing.mact"), IoError);
}

TEST_CASE("negative layer indices") {
    CHECK(resolve_layer(-1, 32) == 31);
    CHECK(resolve_layer(-5, 32) == 27);
    CHECK(resolve_layer(0, 32) == 0);
    CHECK(resolve_layer(31, 32) == 31);
    CHECK_THROWS_AS(resolve_layer(32, 32), ValidationError);
    CHECK_THROWS_AS(resolve_layer(-33, 32), ValidationError);
    for (std::uint32_t l = 0; l < 32; ++l) {
        CHECK(resolve_layer(to_negative_layer(l, 32), 32) == l);
    }
}

TEST_CASE("pairing orders by (query, k), reports orphans and rejects duplicates") {
    auto rec = [](std::uint64_t q, std::uint32_t k, std::uint32_t layer, Variant v, float x) {
        ActivationRecord r;
        r.query_id = q;
        r.truncation_index = k;
        r.layer_index = layer;
        r.variant = v;
        r.vector = {x, x};
        return r;
    };
    std::vector<ActivationRecord> recs{
        rec(2, 1, 0, Variant::Reference, 1),    rec(1, 2, 0, Variant::Experimental, 2),
        rec(1, 2, 0, Variant::Reference, 3),    rec(2, 1, 0, Variant::Experimental, 4),
        rec(1, 1, 0, Variant::Experimental, 5), rec(1, 1, 1, Variant::Reference, 6),
        rec(1, 1, 0, Variant::Reference, 7),    rec(3, 1, 0, Variant::Reference, 8),
    };
    const auto p = pair_contrastive(recs, 0);
    REQUIRE(p.pairs.size() == 3);
    CHECK(p.pairs[0].query_id == 1);
    CHECK(p.pairs[0].truncation_index == 1);
    CHECK(p.pairs[1].truncation_index == 2);
    CHECK(p.pairs[2].query_id == 2);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(p.pairs[i].ordinal == i);
    }
    CHECK(p.pairs[2].plus[0] == 4);
    CHECK(p.pairs[2].minus[0] == 1);
    REQUIRE(p.orphans.size() == 1);
    CHECK(p.orphans[0].query_id == 3);
    CHECK(p.orphans[0].present == Variant::Reference);

    const auto layer1 = pair_contrastive(recs, 1);
    CHECK(layer1.pairs.empty());
    CHECK(layer1.orphans.size() == 1);

    recs.push_back(rec(2, 1, 0, Variant::Reference, 9));
    CHECK_THROWS_AS(pair_contrastive(recs, 0), AmbiguityError);

    recs.pop_back();
    recs[0].role = Role::InferenceFirstToken;
    recs[0].first_token_text = "Yes";
    CHECK_THROWS_AS(pair_contrastive(recs, 0), ValidationError);
}
