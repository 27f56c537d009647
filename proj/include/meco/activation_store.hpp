#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace meco::store {

enum class Variant : std::uint8_t { Reference = 0, Experimental = 1 };
enum class Role : std::uint8_t { TrainContrastive = 0, InferenceFirstToken = 1 };

// One hidden-state vector at the last token position of a (query, prefix) input.
struct ActivationRecord {
    std::uint64_t query_id = 0;
    std::uint32_t truncation_index = 1;
    std::uint32_t layer_index = 0;
    Variant variant = Variant::Reference;
    Role role = Role::TrainContrastive;
    std::vector<float> vector;
    std::optional<std::string> first_token_text;

    bool operator==(const ActivationRecord &) const = default;
};

struct ContainerHeader {
    std::string model_id;
    std::string concept_name;
    std::uint32_t dim = 0;
    std::uint32_t layer_count = 0;
    std::uint64_t count = 0; // filled in by the writer

    bool operator==(const ContainerHeader &) const = default;
};

inline constexpr unsigned char kMagic[8] = {0x4D, 0x41, 0x43, 0x54, 0x31, 0x00, 0x00, 0x00};

// query_id(8) + truncation_index(4) + layer_index(4) + variant(1) + role(1) + first_token_len(2)
inline constexpr std::size_t kRecordFixedBytes = 20;

// Size in bytes of the serialized header (magic + length prefix + JSON).
std::size_t header_bytes(const ContainerHeader & header);
std::size_t record_bytes(const ActivationRecord & record);

// Throws ShapeError / ValidationError if `record` breaks an invariant against `header`.
void validate_record(const ContainerHeader & header, const ActivationRecord & record);

// Validates every record first; nothing is emitted if any record is invalid.
std::uint64_t write_records(ContainerHeader header, std::span<const ActivationRecord> records, std::ostream & sink);

// Atomic file variant: a failed write leaves no file at `path`.
std::uint64_t write_records(ContainerHeader header, std::span<const ActivationRecord> records,
                            const std::filesystem::path & path);

// Streaming reader. Records come back in file order; a truncated or malformed
// record raises CorruptionError naming its byte offset after all complete
// preceding records have been returned.
class RecordReader {
  public:
    explicit RecordReader(std::istream & source);
    explicit RecordReader(const std::filesystem::path & path);
    ~RecordReader();
    RecordReader(const RecordReader &) = delete;
    RecordReader & operator=(const RecordReader &) = delete;

    const ContainerHeader & header() const { return header_; }

    // Returns std::nullopt once `count` records have been read.
    std::optional<ActivationRecord> next();

  private:
    void read_header();
    bool read_exact(unsigned char * dst, std::size_t n);

    std::unique_ptr<std::istream> owned_;
    std::istream * in_;
    ContainerHeader header_;
    std::uint64_t offset_ = 0;
    std::uint64_t read_count_ = 0;
};

struct Container {
    ContainerHeader header;
    std::vector<ActivationRecord> records;
};

Container read_records(std::istream & source);
Container read_records(const std::filesystem::path & path);

// Debug format: first line is the header object, then one record object per line.
void write_records_jsonl(ContainerHeader header, std::span<const ActivationRecord> records,
                         const std::filesystem::path & path);
Container read_records_jsonl(const std::filesystem::path & path);

// Maps -j to L-j; non-negative indices pass through. Throws if out of [0, L).
std::uint32_t resolve_layer(int index, std::uint32_t layer_count);
int to_negative_layer(std::uint32_t layer_index, std::uint32_t layer_count);

struct ContrastivePair {
    std::uint64_t query_id = 0;
    std::uint32_t truncation_index = 0;
    std::uint32_t layer_index = 0;
    std::size_t ordinal = 0;
    std::vector<float> plus;
    std::vector<float> minus;
};

struct OrphanRecord {
    std::uint64_t query_id;
    std::uint32_t truncation_index;
    std::uint32_t layer_index;
    Variant present;
};

struct Pairing {
    std::vector<ContrastivePair> pairs;
    std::vector<OrphanRecord> orphans;
};

// Pairs Experimental/Reference records at `layer`, ordered by (query_id, k).
Pairing pair_contrastive(std::span<const ActivationRecord> records, std::uint32_t layer);

} // namespace meco::store
