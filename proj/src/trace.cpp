#include "hdawf/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "hdawf/rng.hpp"

namespace hdawf {

Trace::Trace(std::vector<Cell> c) : cells(std::move(c)) {
    for (Cell v : cells) {
        if (v < -1 || v > 1) throw DatasetError("trace cell out of range: " + std::to_string(v));
    }
}

Signal to_signal(const Trace& t) { return Signal(t.cells.begin(), t.cells.end()); }

SoftLabel one_hot(std::size_t index, std::size_t dim) {
    if (index >= dim) throw std::out_of_range("one_hot index out of range");
    SoftLabel y(dim, 0.0);
    y[index] = 1.0;
    return y;
}

bool Dataset::has_background() const {
    return std::any_of(records.begin(), records.end(),
                       [](const Record& r) { return r.label == kBackground; });
}

void Dataset::validate() const {
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.trace.size() != trace_len) {
            throw DatasetError("record " + std::to_string(i) + ": trace length " +
                               std::to_string(r.trace.size()) + " != " + std::to_string(trace_len));
        }
        if (r.label != kBackground && (r.label < 0 || r.label >= num_classes)) {
            throw DatasetError("record " + std::to_string(i) + ": label " +
                               std::to_string(r.label) + " invalid for K=" +
                               std::to_string(num_classes));
        }
    }
}

std::size_t class_index(int label, int num_classes) {
    if (label == kBackground) return static_cast<std::size_t>(num_classes);
    if (label < 0 || label >= num_classes) {
        throw DatasetError("label " + std::to_string(label) + " outside 0.." +
                           std::to_string(num_classes - 1));
    }
    return static_cast<std::size_t>(label);
}

SoftLabel target_for(int label, int num_classes, bool open_world) {
    const std::size_t dim = static_cast<std::size_t>(num_classes) + (open_world ? 1 : 0);
    if (label == kBackground && !open_world) {
        throw DatasetError("background record in a closed-world dataset");
    }
    return one_hot(class_index(label, num_classes), dim);
}

namespace {

int parse_int(std::string_view tok, const std::string& source, std::size_t line_no) {
    int v = 0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || tok.empty()) {
        throw ParseError(source, line_no, "not an integer: '" + std::string(tok) + "'");
    }
    return v;
}

}  // namespace

Dataset parse_dataset(const std::string& text, std::size_t trace_len, const std::string& source) {
    if (trace_len == 0) throw DatasetError("trace_len must be positive");
    Dataset d;
    d.trace_len = trace_len;
    d.source = source;

    int max_label = -1;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        ++line_no;
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string_view line(text.data() + pos, eol - pos);
        pos = eol + 1;

        if (line.empty()) throw ParseError(source, line_no, "blank line");
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos) throw ParseError(source, line_no, "missing tab after label");

        Record rec;
        rec.label = parse_int(line.substr(0, tab), source, line_no);
        if (rec.label < kBackground) {
            throw ParseError(source, line_no, "label must be -1 or non-negative");
        }
        max_label = std::max(max_label, rec.label);

        std::vector<Cell> cells;
        cells.reserve(trace_len);
        std::string_view rest = line.substr(tab + 1);
        std::size_t p = 0;
        while (p < rest.size()) {
            std::size_t sp = rest.find(' ', p);
            if (sp == std::string_view::npos) sp = rest.size();
            const int v = parse_int(rest.substr(p, sp - p), source, line_no);
            if (v != 1 && v != -1) {
                throw ParseError(source, line_no, "direction must be 1 or -1, got " + std::to_string(v));
            }
            if (cells.size() < trace_len) cells.push_back(static_cast<Cell>(v));
            p = sp + 1;
        }
        cells.resize(trace_len, 0);
        rec.trace.cells = std::move(cells);
        d.records.push_back(std::move(rec));
    }
    if (d.records.empty()) throw DatasetError(source + ": empty dataset");
    d.num_classes = max_label + 1;
    return d;
}

Dataset load_dataset(const std::filesystem::path& path, std::size_t trace_len) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str(), trace_len, path.string());
}

std::string format_dataset(const Dataset& d) {
    std::string out;
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        const auto& r = d.records[i];
        const auto& c = r.trace.cells;
        std::size_t end = c.size();
        while (end > 0 && c[end - 1] == 0) --end;
        out += std::to_string(r.label);
        out += '\t';
        for (std::size_t k = 0; k < end; ++k) {
            if (c[k] == 0) {
                throw DatasetError("record " + std::to_string(i) +
                                   ": interior zero cell cannot be written to a trace file");
            }
            if (k) out += ' ';
            out += c[k] > 0 ? "1" : "-1";
        }
        out += '\n';
    }
    return out;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    const std::string text = format_dataset(d);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot write " + path.string());
    out << text;
    if (!out) throw DatasetError("write failed: " + path.string());
}

Splits make_splits(const Dataset& d, const SplitSpec& spec) {
    if (spec.shots_per_class < 1) throw DatasetError("shots per class must be >= 1");
    if (spec.val_per_class < 0 || spec.test_per_class < 0 || spec.bg_train < 0 ||
        spec.bg_val < 0 || spec.bg_test < 0) {
        throw DatasetError("split counts must be non-negative");
    }

    // Group indices by label; background is keyed as -1 and sorts first.
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < d.records.size(); ++i) by_class[d.records[i].label].push_back(i);

    Splits s;
    for (Dataset* part : {&s.train, &s.val, &s.test}) {
        part->trace_len = d.trace_len;
        part->num_classes = d.num_classes;
        part->source = d.source;
        part->seed = spec.seed;
    }

    for (int cls = 0; cls < d.num_classes; ++cls) {
        const std::size_t need = static_cast<std::size_t>(spec.shots_per_class) +
                                 spec.val_per_class + spec.test_per_class;
        const std::size_t have = by_class.count(cls) ? by_class[cls].size() : 0;
        if (have < need) {
            throw DatasetError("class " + std::to_string(cls) + " has " + std::to_string(have) +
                               " samples, split needs " + std::to_string(need));
        }
    }
    const std::size_t bg_need = static_cast<std::size_t>(spec.bg_train) + spec.bg_val + spec.bg_test;
    if (bg_need > 0) {
        const std::size_t have = by_class.count(kBackground) ? by_class[kBackground].size() : 0;
        if (have < bg_need) {
            throw DatasetError("background has " + std::to_string(have) +
                               " samples, split needs " + std::to_string(bg_need));
        }
    }

    // Stratified: each class gets its own shuffled stream so adding a class
    // never perturbs the others.
    auto take = [&](int cls, std::size_t n_train, std::size_t n_val, std::size_t n_test) {
        auto idx = by_class[cls];
        Rng rng = make_rng(derive_seed(spec.seed, Stream::split, static_cast<std::uint64_t>(cls + 1)));
        for (std::size_t i = idx.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i - 1)));
            std::swap(idx[i - 1], idx[j]);
        }
        std::size_t k = 0;
        for (std::size_t n = 0; n < n_train; ++n) s.train.records.push_back(d.records[idx[k++]]);
        for (std::size_t n = 0; n < n_val; ++n) s.val.records.push_back(d.records[idx[k++]]);
        for (std::size_t n = 0; n < n_test; ++n) s.test.records.push_back(d.records[idx[k++]]);
    };
    for (int cls = 0; cls < d.num_classes; ++cls) {
        take(cls, spec.shots_per_class, spec.val_per_class, spec.test_per_class);
    }
    if (bg_need > 0) take(kBackground, spec.bg_train, spec.bg_val, spec.bg_test);
    return s;
}

namespace {

struct Run {
    Cell sign;
    int length;
};

struct Template {
    std::vector<Run> runs;
    std::size_t total;  // number of nonzero cells
};

int draw_run(Rng& rng, Cell sign) {
    // Log-uniform in [1, 64] cells; incoming bursts run twice as long as
    // outgoing requests, as in real page loads.
    const double u = uniform_real(rng);
    int len = static_cast<int>(std::exp(u * std::log(64.0)));
    if (sign < 0) len *= 2;
    return std::max(len, 1);
}

// Every class is a variant of one shared base template: it keeps the base
// run lengths except for a fraction `distinct` of runs, and scales the base
// total by a class factor in [0.8, 1.2].
Template make_template(const SynthSpec& spec, std::uint64_t key) {
    Rng base = make_rng(derive_seed(spec.seed, Stream::synth, ~0ULL));
    Rng own = make_rng(derive_seed(spec.seed, Stream::synth, key));
    const auto L = static_cast<std::int64_t>(spec.trace_len);
    const std::int64_t base_total = uniform_int(base, std::max<std::int64_t>(1, L * 11 / 20),
                                                std::max<std::int64_t>(1, L * 3 / 4));
    const double scale = 0.8 + 0.4 * uniform_real(own);
    Template t;
    t.total = static_cast<std::size_t>(std::clamp<std::int64_t>(
        std::llround(scale * static_cast<double>(base_total)), 1, std::max<std::int64_t>(1, L * 19 / 20)));
    std::size_t covered = 0;
    Cell sign = 1;
    // Runs extend past the total so jittered (shortened) samples still fill it.
    const std::size_t span = t.total + t.total / 2 + 64;
    while (covered < span) {
        const int shared = draw_run(base, sign);
        const int mine = draw_run(own, sign);
        const int len = uniform_real(own) < spec.distinct ? mine : shared;
        t.runs.push_back({sign, len});
        covered += static_cast<std::size_t>(len);
        sign = static_cast<Cell>(-sign);
    }
    return t;
}

Trace render(const Template& t, std::size_t trace_len, double jitter, double noise, Rng* rng) {
    std::vector<Cell> cells;
    cells.reserve(trace_len);
    // The end of the trace is the last run boundary and jitters like the others.
    std::size_t total = t.total;
    if (rng && jitter > 0.0) {
        const auto j = static_cast<std::int64_t>(std::lround(jitter * static_cast<double>(total)));
        total = static_cast<std::size_t>(
            std::max<std::int64_t>(1, static_cast<std::int64_t>(total) + uniform_int(*rng, -j, j)));
    }
    const std::size_t limit = std::min(total, trace_len);
    for (const Run& run : t.runs) {
        int len = run.length;
        if (rng && jitter > 0.0) {
            const auto j = static_cast<std::int64_t>(std::lround(jitter * len));
            len = std::max<int>(1, len + static_cast<int>(uniform_int(*rng, -j, j)));
        }
        for (int k = 0; k < len && cells.size() < limit; ++k) cells.push_back(run.sign);
        if (cells.size() >= limit) break;
    }
    if (rng && noise > 0.0) {
        for (Cell& c : cells) {
            if (bernoulli(*rng, noise)) c = static_cast<Cell>(-c);
        }
    }
    cells.resize(trace_len, 0);
    return Trace(std::move(cells));
}

void check_synth(const SynthSpec& spec) {
    if (spec.num_classes < 2) throw DatasetError("synth needs at least 2 classes");
    if (spec.samples_per_class < 1) throw DatasetError("synth needs at least 1 sample per class");
    if (spec.trace_len == 0) throw DatasetError("trace_len must be positive");
    if (!(spec.noise_rate >= 0.0 && spec.noise_rate < 0.5)) {
        throw DatasetError("noise rate must lie in [0, 0.5)");
    }
    if (spec.background < 0) throw DatasetError("background count must be non-negative");
    if (!(spec.distinct > 0.0 && spec.distinct <= 1.0)) {
        throw DatasetError("distinct run fraction must lie in (0, 1]");
    }
}

// Boundary jitter is a fraction of run length, capped at 10%. It scales with
// the noise rate so that a noise-free dataset reproduces its templates.
double jitter_for(double noise_rate) { return std::min(0.1, 2.0 * noise_rate); }

}  // namespace

Trace synth_template(const SynthSpec& spec, int cls) {
    check_synth(spec);
    return render(make_template(spec, static_cast<std::uint64_t>(cls)), spec.trace_len, 0.0, 0.0,
                  nullptr);
}

Dataset synth_dataset(const SynthSpec& spec) {
    check_synth(spec);
    Dataset d;
    d.trace_len = spec.trace_len;
    d.num_classes = spec.num_classes;
    d.source = "synth";
    d.seed = spec.seed;
    const double jitter = jitter_for(spec.noise_rate);
    d.records.reserve(static_cast<std::size_t>(spec.num_classes) * spec.samples_per_class +
                      static_cast<std::size_t>(spec.background));
    for (int c = 0; c < spec.num_classes; ++c) {
        const Template t = make_template(spec, static_cast<std::uint64_t>(c));
        for (int i = 0; i < spec.samples_per_class; ++i) {
            Rng rng = make_rng(derive_seed(spec.seed, Stream::sample, static_cast<std::uint64_t>(c),
                                           static_cast<std::uint64_t>(i)));
            d.records.push_back({render(t, spec.trace_len, jitter, spec.noise_rate, &rng), c});
        }
    }
    for (int b = 0; b < spec.background; ++b) {
        const auto key = static_cast<std::uint64_t>(spec.num_classes + b);
        const Template t = make_template(spec, key);
        Rng rng = make_rng(derive_seed(spec.seed, Stream::sample, key, 0));
        d.records.push_back({render(t, spec.trace_len, jitter, spec.noise_rate, &rng), kBackground});
    }
    return d;
}

}  // namespace hdawf
