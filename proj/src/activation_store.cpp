#include "meco/activation_store.hpp"

#include "meco/error.hpp"
#include "meco/io_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace meco::store {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint32_t kMaxHeaderBytes = 1u << 20;

std::string header_json(const ContainerHeader & h) {
    ordered_json j;
    j["model_id"] = h.model_id;
    j["concept"] = h.concept_name;
    j["d"] = h.dim;
    j["L"] = h.layer_count;
    j["dtype"] = "f32le";
    j["count"] = h.count;
    return j.dump();
}

ContainerHeader parse_header_json(const std::string & text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception & e) {
        throw FormatError(std::string("MACT1 header is not valid JSON: ") + e.what());
    }
    ContainerHeader h;
    try {
        h.model_id = j.at("model_id").get<std::string>();
        h.concept_name = j.at("concept").get<std::string>();
        h.dim = j.at("d").get<std::uint32_t>();
        h.layer_count = j.at("L").get<std::uint32_t>();
        h.count = j.at("count").get<std::uint64_t>();
        if (j.at("dtype").get<std::string>() != "f32le") {
            throw FormatError("unsupported dtype: " + j.at("dtype").get<std::string>());
        }
    } catch (const nlohmann::json::exception & e) {
        throw FormatError(std::string("MACT1 header missing or mistyped field: ") + e.what());
    }
    if (h.dim == 0 || h.layer_count == 0) {
        throw FormatError("MACT1 header declares d = 0 or L = 0");
    }
    return h;
}

void check_header(const ContainerHeader & h) {
    if (h.dim == 0) {
        throw ShapeError("container dimension d must be positive");
    }
    if (h.layer_count == 0) {
        throw ShapeError("container layer count L must be positive");
    }
}

} // namespace

std::size_t header_bytes(const ContainerHeader & header) {
    return sizeof(kMagic) + 4 + header_json(header).size();
}

std::size_t record_bytes(const ActivationRecord & record) {
    const std::size_t text = record.first_token_text ? record.first_token_text->size() : 0;
    return kRecordFixedBytes + text + 4 * record.vector.size();
}

void validate_record(const ContainerHeader & header, const ActivationRecord & r) {
    if (r.vector.size() != header.dim) {
        throw ShapeError("record for query " + std::to_string(r.query_id) + " has dimension " +
                         std::to_string(r.vector.size()) + ", container declares " + std::to_string(header.dim));
    }
    if (r.layer_index >= header.layer_count) {
        throw ValidationError("record layer_index " + std::to_string(r.layer_index) + " >= L = " +
                              std::to_string(header.layer_count));
    }
    if (r.truncation_index < 1) {
        throw ValidationError("truncation_index must be >= 1");
    }
    if (r.role == Role::InferenceFirstToken && !r.first_token_text) {
        throw ValidationError("InferenceFirstToken record without first_token_text");
    }
    if (r.role == Role::TrainContrastive && r.first_token_text) {
        throw ValidationError("TrainContrastive record carries first_token_text");
    }
    if (r.first_token_text && r.first_token_text->size() > 0xFFFF) {
        throw ValidationError("first_token_text longer than 65535 bytes");
    }
}

std::uint64_t write_records(ContainerHeader header, std::span<const ActivationRecord> records, std::ostream & sink) {
    check_header(header);
    for (const auto & r : records) {
        validate_record(header, r);
    }
    header.count = records.size();

    const std::string json = header_json(header);
    sink.write(reinterpret_cast<const char *>(kMagic), sizeof(kMagic));
    io::put_u32(sink, static_cast<std::uint32_t>(json.size()));
    sink.write(json.data(), static_cast<std::streamsize>(json.size()));
    for (const auto & r : records) {
        io::put_u64(sink, r.query_id);
        io::put_u32(sink, r.truncation_index);
        io::put_u32(sink, r.layer_index);
        sink.put(static_cast<char>(r.variant));
        sink.put(static_cast<char>(r.role));
        const std::string & text = r.first_token_text ? *r.first_token_text : std::string();
        io::put_u16(sink, static_cast<std::uint16_t>(text.size()));
        sink.write(text.data(), static_cast<std::streamsize>(text.size()));
        sink.write(reinterpret_cast<const char *>(r.vector.data()), static_cast<std::streamsize>(4 * r.vector.size()));
    }
    if (!sink) {
        throw IoError("MACT1 write failed");
    }
    return records.size();
}

std::uint64_t write_records(ContainerHeader header, std::span<const ActivationRecord> records,
                            const std::filesystem::path & path) {
    check_header(header);
    for (const auto & r : records) {
        validate_record(header, r);
    }
    std::uint64_t written = 0;
    io::write_atomic(path, [&](std::ostream & os) { written = write_records(header, records, os); });
    return written;
}

RecordReader::RecordReader(std::istream & source) : in_(&source) { read_header(); }

RecordReader::RecordReader(const std::filesystem::path & path) {
    auto file = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*file) {
        throw IoError("cannot open: " + path.string());
    }
    owned_ = std::move(file);
    in_ = owned_.get();
    read_header();
}

RecordReader::~RecordReader() = default;

bool RecordReader::read_exact(unsigned char * dst, std::size_t n) {
    in_->read(reinterpret_cast<char *>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_->gcount());
    offset_ += got;
    return got == n;
}

void RecordReader::read_header() {
    unsigned char magic[8];
    if (!read_exact(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("not a MACT1 container (bad magic or version)");
    }
    unsigned char len_bytes[4];
    if (!read_exact(len_bytes, 4)) {
        throw FormatError("MACT1 header length missing");
    }
    const std::uint32_t len = io::load_u32(len_bytes);
    if (len == 0 || len > kMaxHeaderBytes) {
        throw FormatError("MACT1 header length out of range: " + std::to_string(len));
    }
    std::string text(len, '\0');
    if (!read_exact(reinterpret_cast<unsigned char *>(text.data()), len)) {
        throw FormatError("MACT1 header truncated");
    }
    header_ = parse_header_json(text);
}

std::optional<ActivationRecord> RecordReader::next() {
    if (read_count_ == header_.count) {
        if (in_->peek() != std::char_traits<char>::eof()) {
            throw CorruptionError("trailing bytes after " + std::to_string(header_.count) + " declared records",
                                  offset_);
        }
        return std::nullopt;
    }
    const std::uint64_t start = offset_;
    const auto truncated = [&] {
        return CorruptionError("record " + std::to_string(read_count_) + " of " + std::to_string(header_.count) +
                                   " truncated",
                               start);
    };

    unsigned char fixed[kRecordFixedBytes];
    if (!read_exact(fixed, sizeof(fixed))) {
        throw truncated();
    }
    ActivationRecord r;
    r.query_id = io::load_u64(fixed);
    r.truncation_index = io::load_u32(fixed + 8);
    r.layer_index = io::load_u32(fixed + 12);
    const unsigned variant = fixed[16];
    const unsigned role = fixed[17];
    const std::uint16_t text_len = io::load_u16(fixed + 18);
    if (variant > 1 || role > 1) {
        throw CorruptionError("record " + std::to_string(read_count_) + " has invalid variant/role byte", start);
    }
    r.variant = static_cast<Variant>(variant);
    r.role = static_cast<Role>(role);
    if (r.role == Role::InferenceFirstToken) {
        std::string text(text_len, '\0');
        if (!read_exact(reinterpret_cast<unsigned char *>(text.data()), text_len)) {
            throw truncated();
        }
        r.first_token_text = std::move(text);
    } else if (text_len != 0) {
        throw CorruptionError("TrainContrastive record " + std::to_string(read_count_) + " carries token text", start);
    }
    r.vector.resize(header_.dim);
    if (!read_exact(reinterpret_cast<unsigned char *>(r.vector.data()), 4 * std::size_t{header_.dim})) {
        throw truncated();
    }
    if (r.layer_index >= header_.layer_count || r.truncation_index < 1) {
        throw CorruptionError("record " + std::to_string(read_count_) + " has out-of-range layer or k", start);
    }
    ++read_count_;
    return r;
}

Container read_records(std::istream & source) {
    RecordReader reader(source);
    Container c{reader.header(), {}};
    c.records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(c.header.count, 1u << 24)));
    while (auto r = reader.next()) {
        c.records.push_back(std::move(*r));
    }
    return c;
}

Container read_records(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    return read_records(in);
}

void write_records_jsonl(ContainerHeader header, std::span<const ActivationRecord> records,
                         const std::filesystem::path & path) {
    check_header(header);
    for (const auto & r : records) {
        validate_record(header, r);
    }
    header.count = records.size();
    io::write_atomic(path, [&](std::ostream & os) {
        os << header_json(header) << '\n';
        for (const auto & r : records) {
            ordered_json j;
            j["query_id"] = r.query_id;
            j["truncation_index"] = r.truncation_index;
            j["layer_index"] = r.layer_index;
            j["variant"] = static_cast<int>(r.variant);
            j["role"] = static_cast<int>(r.role);
            j["first_token"] = r.first_token_text ? ordered_json(*r.first_token_text) : ordered_json(nullptr);
            j["vector"] = r.vector;
            os << j.dump() << '\n';
        }
    });
}

Container read_records_jsonl(const std::filesystem::path & path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("empty debug container");
    }
    Container c{parse_header_json(line), {}};
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = ordered_json::parse(line);
            ActivationRecord r;
            r.query_id = j.at("query_id").get<std::uint64_t>();
            r.truncation_index = j.at("truncation_index").get<std::uint32_t>();
            r.layer_index = j.at("layer_index").get<std::uint32_t>();
            r.variant = static_cast<Variant>(j.at("variant").get<int>() != 0);
            r.role = static_cast<Role>(j.at("role").get<int>() != 0);
            if (!j.at("first_token").is_null()) {
                r.first_token_text = j.at("first_token").get<std::string>();
            }
            r.vector = j.at("vector").get<std::vector<float>>();
            validate_record(c.header, r);
            c.records.push_back(std::move(r));
        } catch (const nlohmann::json::exception & e) {
            throw FormatError("debug container line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (c.records.size() != c.header.count) {
        throw FormatError("debug container declares " + std::to_string(c.header.count) + " records, found " +
                          std::to_string(c.records.size()));
    }
    return c;
}

std::uint32_t resolve_layer(int index, std::uint32_t layer_count) {
    const long long L = layer_count;
    const long long resolved = index < 0 ? L + index : index;
    if (resolved < 0 || resolved >= L) {
        throw ValidationError("layer " + std::to_string(index) + " out of range for L = " + std::to_string(L));
    }
    return static_cast<std::uint32_t>(resolved);
}

int to_negative_layer(std::uint32_t layer_index, std::uint32_t layer_count) {
    return static_cast<int>(layer_index) - static_cast<int>(layer_count);
}

Pairing pair_contrastive(std::span<const ActivationRecord> records, std::uint32_t layer) {
    using Key = std::tuple<std::uint64_t, std::uint32_t>;
    struct Arms {
        const ActivationRecord * plus = nullptr;
        const ActivationRecord * minus = nullptr;
    };
    std::map<Key, Arms> by_key;
    for (const auto & r : records) {
        if (r.role != Role::TrainContrastive) {
            throw ValidationError("pair_contrastive expects TrainContrastive records only (query " +
                                  std::to_string(r.query_id) + ")");
        }
        if (r.layer_index != layer) {
            continue;
        }
        Arms & arms = by_key[{r.query_id, r.truncation_index}];
        const ActivationRecord *& slot = r.variant == Variant::Experimental ? arms.plus : arms.minus;
        if (slot != nullptr) {
            throw AmbiguityError("duplicate record for (query " + std::to_string(r.query_id) + ", k " +
                                 std::to_string(r.truncation_index) + ", layer " + std::to_string(layer) + ", " +
                                 (r.variant == Variant::Experimental ? "Experimental" : "Reference") + ")");
        }
        slot = &r;
    }

    Pairing out;
    for (const auto & [key, arms] : by_key) {
        const auto [query_id, k] = key;
        if (arms.plus && arms.minus) {
            if (arms.plus->vector.size() != arms.minus->vector.size()) {
                throw ShapeError("pair arms differ in dimension for query " + std::to_string(query_id));
            }
            ContrastivePair p;
            p.query_id = query_id;
            p.truncation_index = k;
            p.layer_index = layer;
            p.ordinal = out.pairs.size();
            p.plus = arms.plus->vector;
            p.minus = arms.minus->vector;
            out.pairs.push_back(std::move(p));
        } else {
            out.orphans.push_back({query_id, k, layer, arms.plus ? Variant::Experimental : Variant::Reference});
        }
    }
    return out;
}

} // namespace meco::store
