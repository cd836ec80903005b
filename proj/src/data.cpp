#include "seesaw/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "seesaw/asna.hpp"
#include "seesaw/kv.hpp"

namespace seesaw {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        out.push_back(kv::trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

bool is_missing(std::string_view cell) {
    std::string lower(cell);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    return lower.empty() || lower == "nan" || lower == "-nan" || lower == "+nan";
}

std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::size_t floor_fraction(std::size_t total, double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(total) * ratio + 1e-9));
}

}  // namespace

RawSeries parse_csv(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError(source + ": empty file, expected a header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_fields(line);
    const bool has_date = !header.empty() && lowercase(header.front()) == "date";
    const std::size_t first = has_date ? 1 : 0;
    if (header.size() <= first) throw FormatError(source + ": header has no value columns");

    RawSeries rs;
    for (std::size_t i = first; i < header.size(); ++i) rs.channel_names.emplace_back(header[i]);
    const std::size_t c = rs.channel_names.size();

    std::vector<std::vector<double>> cols(c);
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (kv::trim(line).empty()) continue;
        ++row;
        const auto fields = split_fields(line);
        if (fields.size() != header.size())
            throw FormatError(source + ": row " + std::to_string(row) + " (line " + std::to_string(row + 1) + ") has " +
                              std::to_string(fields.size()) + " fields, header has " + std::to_string(header.size()));
        std::vector<double> vals(c);
        bool missing = false;
        for (std::size_t j = 0; j < c; ++j) {
            const auto cell = fields[first + j];
            if (is_missing(cell)) {
                missing = true;
                continue;
            }
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), vals[j]);
            if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(vals[j]))
                throw FormatError(source + ": row " + std::to_string(row) + " (line " + std::to_string(row + 1) +
                                  "), column '" + rs.channel_names[j] + "': cannot parse '" + std::string(cell) + "'");
        }
        if (missing) {
            rs.diagnostics.push_back("row " + std::to_string(row) + " (line " + std::to_string(row + 1) +
                                     ") dropped: missing value");
            continue;
        }
        if (has_date) rs.timestamps.emplace_back(fields[0]);
        for (std::size_t j = 0; j < c; ++j) cols[j].push_back(vals[j]);
    }
    const std::size_t total = cols[0].size();
    std::vector<double> flat;
    flat.reserve(c * total);
    for (const auto& col : cols) flat.insert(flat.end(), col.begin(), col.end());
    rs.values = Tensor({c, total}, std::move(flat));
    return rs;
}

RawSeries load_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open data file '" + path.string() + "'");
    return parse_csv(is, path.string());
}

void write_csv(std::ostream& out, const std::vector<std::string>& channel_names, const Tensor& values,
               const std::vector<std::string>& timestamps) {
    if (values.rank() != 2 || values.dim(0) != channel_names.size())
        throw DimensionError("write_csv: values " + shape_str(values.shape()) + " do not match " +
                             std::to_string(channel_names.size()) + " channel names");
    const std::size_t c = values.dim(0), t = values.dim(1);
    const bool dated = !timestamps.empty();
    if (dated && timestamps.size() != t) throw DimensionError("write_csv: timestamp count mismatch");
    if (dated) out << "date";
    for (std::size_t j = 0; j < c; ++j) out << (j || dated ? "," : "") << channel_names[j];
    out << '\n';
    const auto v = values.data();
    for (std::size_t i = 0; i < t; ++i) {
        if (dated) out << timestamps[i];
        for (std::size_t j = 0; j < c; ++j) out << (j || dated ? "," : "") << kv::format_double(v[j * t + i]);
        out << '\n';
    }
}

SplitRanges chronological_split(std::size_t total, const SplitRatios& ratios, std::size_t seq_len,
                                std::size_t pred_len) {
    const double sum = ratios.train + ratios.val + ratios.test;
    if (ratios.train <= 0.0 || ratios.val < 0.0 || ratios.test < 0.0 || sum > 1.0 + 1e-9)
        throw UsageError("split: ratios must be non-negative with positive train share and sum <= 1");
    if (seq_len == 0 || pred_len == 0) throw UsageError("split: seq_len and pred_len must be positive");
    const std::size_t need = seq_len + pred_len;
    if (total < need)
        throw UsageError("split: series length " + std::to_string(total) + " is shorter than L + H = " +
                         std::to_string(need));

    const std::size_t n_train = floor_fraction(total, ratios.train);
    const std::size_t n_val = floor_fraction(total, ratios.val);
    const std::size_t val_end = n_train + n_val;
    const std::size_t test_end = sum >= 1.0 - 1e-9 ? total : val_end + floor_fraction(total, ratios.test);

    SplitRanges s;
    s.train = {0, n_train};
    const std::size_t back = seq_len - 1;
    if (n_val > 0) s.val = {n_train - std::min(back, n_train), val_end};
    else s.val = {val_end, val_end};
    if (test_end > val_end) s.test = {val_end - std::min(back, val_end), test_end};
    else s.test = {test_end, test_end};

    auto check = [need](const IndexRange& r, const char* name) {
        if (!r.empty() && r.size() < need)
            throw UsageError(std::string("split: ") + name + " range [" + std::to_string(r.start) + ", " +
                             std::to_string(r.end) + ") is shorter than L + H = " + std::to_string(need));
    };
    check(s.train, "train");
    check(s.val, "val");
    check(s.test, "test");
    return s;
}

WindowDataset::WindowDataset(std::shared_ptr<const RawSeries> series, IndexRange range, std::size_t seq_len,
                             std::size_t pred_len, SplitTag tag)
    : series_(std::move(series)), range_(range), seq_len_(seq_len), pred_len_(pred_len), tag_(tag) {
    if (!series_) throw UsageError("windows: null series");
    if (range.end > series_->length() || range.start > range.end)
        throw UsageError("windows: range exceeds series length " + std::to_string(series_->length()));
    const std::size_t need = seq_len + pred_len;
    count_ = range.size() >= need ? range.size() - need + 1 : 0;
    if (!range.empty() && count_ == 0)
        throw UsageError("windows: range of length " + std::to_string(range.size()) + " is shorter than L + H = " +
                         std::to_string(need));
}

std::size_t WindowDataset::start(std::size_t i) const {
    if (i >= count_) throw UsageError("windows: index " + std::to_string(i) + " out of range (" + std::to_string(count_) + " windows)");
    return range_.start + i;
}

SeriesInstance WindowDataset::instance(std::size_t i) const {
    const std::size_t s = start(i);
    const std::size_t c = channels(), total = series_->length();
    const auto v = series_->values.data();
    std::vector<double> x(c * seq_len_), y(c * pred_len_);
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(ch * total + s), seq_len_, x.begin() + static_cast<std::ptrdiff_t>(ch * seq_len_));
        std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(ch * total + s + seq_len_), pred_len_,
                    y.begin() + static_cast<std::ptrdiff_t>(ch * pred_len_));
    }
    return {Tensor({c, seq_len_}, std::move(x)), Tensor({c, pred_len_}, std::move(y))};
}

SeriesInstance WindowDataset::batch(std::span<const std::size_t> indices) const {
    const std::size_t c = channels();
    std::vector<double> x, y;
    x.reserve(indices.size() * c * seq_len_);
    y.reserve(indices.size() * c * pred_len_);
    for (std::size_t i : indices) {
        const auto inst = instance(i);
        x.insert(x.end(), inst.x.data().begin(), inst.x.data().end());
        y.insert(y.end(), inst.y.data().begin(), inst.y.data().end());
    }
    return {Tensor({indices.size(), c, seq_len_}, std::move(x)), Tensor({indices.size(), c, pred_len_}, std::move(y))};
}

WindowDataset make_windows(std::shared_ptr<const RawSeries> series, IndexRange range, std::size_t seq_len,
                           std::size_t pred_len, SplitTag tag) {
    return WindowDataset(std::move(series), range, seq_len, pred_len, tag);
}

DatasetSplits make_splits(std::shared_ptr<const RawSeries> series, const SplitRatios& ratios, std::size_t seq_len,
                          std::size_t pred_len) {
    const SplitRanges r = chronological_split(series->length(), ratios, seq_len, pred_len);
    return {make_windows(series, r.train, seq_len, pred_len, SplitTag::train),
            make_windows(series, r.val, seq_len, pred_len, SplitTag::val),
            make_windows(series, r.test, seq_len, pred_len, SplitTag::test)};
}

RawSeries synth_generate(const SynthSpec& spec) {
    if (spec.channels == 0 || spec.regime_period == 0 || spec.total < spec.regime_period)
        throw UsageError("synth: need channels >= 1, regime_period >= 1 and total >= regime_period");
    std::mt19937_64 rng(spec.seed);
    const double two_pi = 2.0 * std::numbers::pi;
    const std::size_t c = spec.channels, total = spec.total;

    struct Channel {
        double level, amp, slope, phase;
    };
    std::vector<Channel> ch(c);
    for (auto& k : ch) {
        k.level = -5.0 + 10.0 * uniform01(rng);
        k.amp = 1.0 + 2.0 * uniform01(rng);
        k.slope = -1.0 + 2.0 * uniform01(rng);
        k.phase = two_pi * uniform01(rng);
    }
    // Box-Muller on the same engine keeps the stream identical across stdlibs.
    auto gaussian = [&rng] {
        const double u1 = 1.0 - uniform01(rng);
        const double u2 = uniform01(rng);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    };

    std::vector<double> values(c * total);
    for (std::size_t t = 0; t < total; ++t) {
        const double td = static_cast<double>(t);
        const double base = std::sin(two_pi * td / 24.0) + 0.5 * std::sin(two_pi * td / 12.0 + 0.7);
        const bool flipped = (t / spec.regime_period) % 2 == 1;
        for (std::size_t k = 0; k < c; ++k) {
            const double sign = (k % 2 == 1 && flipped) ? -1.0 : 1.0;
            const double own_period = k % 2 == 0 ? 48.0 : 96.0;
            double v = ch[k].level + ch[k].amp * sign * base + 0.5 * std::sin(two_pi * td / own_period + ch[k].phase);
            if (spec.trend_scale != 0.0) v += spec.trend_scale * ch[k].slope * td / 100.0;
            if (spec.noise_std != 0.0) v += spec.noise_std * gaussian();
            values[k * total + t] = v;
        }
    }

    RawSeries rs;
    for (std::size_t k = 0; k < c; ++k) rs.channel_names.push_back("ch" + std::to_string(k));
    rs.values = Tensor({c, total}, std::move(values));
    return rs;
}

}  // namespace seesaw
