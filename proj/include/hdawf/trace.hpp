#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdawf {

// Cell direction: +1 outgoing, -1 incoming, 0 padding or masked.
using Cell = std::int8_t;

// Label of an unmonitored site, as written on disk.
inline constexpr int kBackground = -1;

inline constexpr std::size_t kDefaultTraceLen = 5000;

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Trace {
    std::vector<Cell> cells;

    Trace() = default;
    explicit Trace(std::vector<Cell> c);

    std::size_t size() const { return cells.size(); }
    bool operator==(const Trace&) const = default;
};

// Real-valued sequence; what the model consumes and what mixing produces.
using Signal = std::vector<double>;

Signal to_signal(const Trace& t);

// Probability vector over the model's output classes.
using SoftLabel = std::vector<double>;

SoftLabel one_hot(std::size_t index, std::size_t dim);

struct Record {
    Trace trace;
    int label = 0;  // 0..K-1 or kBackground

    bool operator==(const Record&) const = default;
};

struct Dataset {
    std::vector<Record> records;
    std::size_t trace_len = kDefaultTraceLen;
    int num_classes = 0;  // monitored classes only
    std::string source;
    std::uint64_t seed = 0;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    bool has_background() const;
    // Throws DatasetError on a length or label violation.
    void validate() const;

    bool operator==(const Dataset& o) const {
        return records == o.records && trace_len == o.trace_len && num_classes == o.num_classes;
    }
};

// Index of a label in the model output vector: background maps to K.
std::size_t class_index(int label, int num_classes);

// One-hot target for a record. Background requires open_world.
SoftLabel target_for(int label, int num_classes, bool open_world);

Dataset parse_dataset(const std::string& text, std::size_t trace_len,
                      const std::string& source = "<memory>");
Dataset load_dataset(const std::filesystem::path& path, std::size_t trace_len);

// Writes the trace file format. Trailing padding zeros are dropped; an
// interior zero (masked cell) cannot be represented and throws.
std::string format_dataset(const Dataset& d);
void save_dataset(const Dataset& d, const std::filesystem::path& path);

struct SplitSpec {
    int shots_per_class = 5;
    int val_per_class = 10;
    int test_per_class = 70;
    // Background records are split as one pseudo-class with these counts.
    int bg_train = 0;
    int bg_val = 0;
    int bg_test = 0;
    std::uint64_t seed = 0;
};

struct Splits {
    Dataset train;
    Dataset val;
    Dataset test;
};

Splits make_splits(const Dataset& d, const SplitSpec& spec);

struct SynthSpec {
    int num_classes = 20;
    int samples_per_class = 100;
    std::size_t trace_len = 1000;
    double noise_rate = 0.05;
    std::uint64_t seed = 0;
    // Unmonitored traces, each drawn from its own one-off template.
    int background = 0;
    // Fraction of runs in which a class departs from the shared base template.
    double distinct = 0.3;
};

// Latent template of class c (noise-free sample).
Trace synth_template(const SynthSpec& spec, int cls);
Dataset synth_dataset(const SynthSpec& spec);

}  // namespace hdawf
