#include "gafnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>

#include "gafnet/error.hpp"
#include "gafnet/rng.hpp"

namespace gafnet::data {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  const std::string s = read_file(path);
  return {s.begin(), s.end()};
}

std::vector<std::string_view> split_fields(std::string_view line, std::string_view separators) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && separators.find(line[i]) != std::string_view::npos) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && separators.find(line[j]) == std::string_view::npos) ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  // strtod accepts the exponent forms found in older UCR releases.
  std::string tmp(s);
  char* end = nullptr;
  out = std::strtod(tmp.c_str(), &end);
  return end == tmp.c_str() + tmp.size() && !tmp.empty() && std::isfinite(out);
}

bool parse_int(std::string_view s, long long& out) {
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return out;
}

struct UcrRow {
  long long label;
  std::vector<double> values;
};

std::vector<UcrRow> parse_ucr_rows(std::string_view text) {
  std::vector<UcrRow> rows;
  std::size_t expected = 0;
  std::size_t line_no = 0;
  for (std::string_view line : lines_of(text)) {
    ++line_no;
    const auto fields = split_fields(line, "\t, ");
    if (fields.empty()) continue;
    if (fields.size() < 2)
      throw Error(ErrorKind::kMalformedRow, "line " + std::to_string(line_no) + " has no series values");
    if (expected == 0) expected = fields.size();
    if (fields.size() != expected)
      throw Error(ErrorKind::kMalformedRow, "line " + std::to_string(line_no) + " has " +
                                                std::to_string(fields.size()) + " fields, expected " +
                                                std::to_string(expected));
    UcrRow row;
    double label_value = 0;
    if (!parse_double(fields[0], label_value) || label_value != std::round(label_value))
      throw Error(ErrorKind::kNonNumericField, "line " + std::to_string(line_no) + ": bad class label '" +
                                                   std::string(fields[0]) + "'");
    row.label = static_cast<long long>(label_value);
    row.values.reserve(fields.size() - 1);
    for (std::size_t f = 1; f < fields.size(); ++f) {
      double v = 0;
      if (!parse_double(fields[f], v))
        throw Error(ErrorKind::kNonNumericField, "line " + std::to_string(line_no) + ": non-numeric value '" +
                                                     std::string(fields[f]) + "'");
      row.values.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorKind::kEmptyFile, "no series found");
  return rows;
}

Dataset build_ucr(std::vector<UcrRow> rows, const std::vector<std::string>& vocabulary, double fs) {
  std::map<long long, std::size_t> ids;
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    long long v = 0;
    if (!parse_int(vocabulary[i], v)) throw Error(ErrorKind::kInvalidArgument, "bad vocabulary label");
    ids[v] = i;
  }
  Dataset ds;
  ds.fs = fs;
  ds.class_names = vocabulary;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto it = ids.find(rows[i].label);
    if (it == ids.end())
      throw Error(ErrorKind::kMalformedRow, "class label " + std::to_string(rows[i].label) +
                                                " is not in the training vocabulary");
    dsp::Segment seg{std::move(rows[i].values), i, static_cast<int>(it->second)};
    ds.items.push_back(LabeledSegment{std::move(seg), it->second});
  }
  return ds;
}

}  // namespace

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (const auto& item : items) ++counts.at(item.class_id);
  return counts;
}

Dataset parse_ucr(std::string_view text, double fs) {
  auto rows = parse_ucr_rows(text);
  std::vector<long long> labels;
  for (const auto& r : rows) labels.push_back(r.label);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  std::vector<std::string> vocabulary;
  for (long long l : labels) vocabulary.push_back(std::to_string(l));
  return build_ucr(std::move(rows), vocabulary, fs);
}

Dataset parse_ucr(std::string_view text, const std::vector<std::string>& vocabulary, double fs) {
  return build_ucr(parse_ucr_rows(text), vocabulary, fs);
}

Dataset load_ucr(const std::filesystem::path& path, double fs) { return parse_ucr(read_file(path), fs); }

Dataset load_ucr(const std::filesystem::path& path, const std::vector<std::string>& vocabulary, double fs) {
  return parse_ucr(read_file(path), vocabulary, fs);
}

// ---- WFDB ----

WfdbHeader parse_wfdb_header(std::string_view text) {
  std::vector<std::vector<std::string_view>> records;
  for (std::string_view line : lines_of(text)) {
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos || line[first] == '#') continue;
    records.push_back(split_fields(line, " \t"));
  }
  if (records.empty()) throw Error(ErrorKind::kMalformedHeader, "header has no record line");

  auto number = [](std::string_view s, const char* what) {
    // Strip suffixes such as "360/..." or "360(0)".
    const std::size_t cut = s.find_first_of("/(:+x");
    double v = 0;
    if (!parse_double(s.substr(0, cut), v))
      throw Error(ErrorKind::kMalformedHeader, std::string("bad ") + what + " field '" + std::string(s) + "'");
    return v;
  };

  WfdbHeader h;
  const auto& rec = records[0];
  if (rec.size() < 2) throw Error(ErrorKind::kMalformedHeader, "record line needs a name and signal count");
  h.record_name = std::string(rec[0].substr(0, rec[0].find('/')));
  long long n_sig = 0;
  if (!parse_int(rec[1], n_sig) || n_sig < 1)
    throw Error(ErrorKind::kMalformedHeader, "bad signal count '" + std::string(rec[1]) + "'");
  h.n_signals = static_cast<std::size_t>(n_sig);
  h.fs = rec.size() > 2 ? number(rec[2], "sampling frequency") : 250.0;
  if (!(h.fs > 0)) throw Error(ErrorKind::kMalformedHeader, "sampling frequency must be positive");
  if (rec.size() > 3) {
    long long n = 0;
    if (!parse_int(rec[3], n) || n < 0)
      throw Error(ErrorKind::kMalformedHeader, "bad sample count '" + std::string(rec[3]) + "'");
    h.n_samples = static_cast<std::size_t>(n);
  }

  if (records.size() < 1 + h.n_signals)
    throw Error(ErrorKind::kMalformedHeader, "header declares " + std::to_string(h.n_signals) +
                                                 " signals but has " + std::to_string(records.size() - 1) +
                                                 " signal lines");
  for (std::size_t s = 0; s < h.n_signals; ++s) {
    const auto& f = records[1 + s];
    if (f.size() < 2) throw Error(ErrorKind::kMalformedHeader, "signal line needs file name and format");
    WfdbSignalSpec spec;
    spec.file_name = std::string(f[0]);
    spec.format = static_cast<int>(number(f[1], "format"));
    if (spec.format != 212)
      throw Error(ErrorKind::kUnsupportedFormat, "signal format " + std::to_string(spec.format) +
                                                     " is not supported (only 212)");
    bool explicit_baseline = false;
    if (f.size() > 2) {
      const std::string_view g = f[2];
      spec.gain = number(g, "gain");
      const auto open = g.find('(');
      if (open != std::string_view::npos) {
        const auto close = g.find(')', open);
        if (close == std::string_view::npos) throw Error(ErrorKind::kMalformedHeader, "unclosed baseline");
        spec.baseline = number(g.substr(open + 1, close - open - 1), "baseline");
        explicit_baseline = true;
      }
      const auto slash = g.find('/');
      if (slash != std::string_view::npos) spec.units = std::string(g.substr(slash + 1));
      if (spec.gain == 0.0) spec.gain = 200.0;
    }
    if (f.size() > 4) {
      spec.adc_zero = static_cast<int>(number(f[4], "adc zero"));
      if (!explicit_baseline) spec.baseline = spec.adc_zero;
    }
    for (std::size_t i = 8; i < f.size(); ++i) {
      if (!spec.description.empty()) spec.description += ' ';
      spec.description += std::string(f[i]);
    }
    h.signals.push_back(std::move(spec));
  }
  return h;
}

std::vector<int> unpack_212(std::span<const unsigned char> bytes, std::size_t count) {
  const std::size_t need = (count / 2) * 3 + (count % 2 ? 2 : 0);
  if (bytes.size() < need)
    throw Error(ErrorKind::kTruncatedPayload, "format-212 payload has " + std::to_string(bytes.size()) +
                                                  " bytes, need " + std::to_string(need));
  auto sign = [](int v) { return v > 2047 ? v - 4096 : v; };
  std::vector<int> out;
  out.reserve(count);
  for (std::size_t i = 0; out.size() < count; i += 3) {
    const int b0 = bytes[i], b1 = bytes[i + 1];
    out.push_back(sign(((b1 & 0x0F) << 8) | b0));
    if (out.size() == count) break;
    const int b2 = bytes[i + 2];
    out.push_back(sign(((b1 & 0xF0) << 4) | b2));
  }
  return out;
}

std::vector<dsp::Signal> parse_wfdb_212(std::span<const unsigned char> bytes, const WfdbHeader& header) {
  if (header.signals.size() != header.n_signals || header.n_signals == 0)
    throw Error(ErrorKind::kHeaderMismatch, "header signal specs do not match the signal count");
  for (const auto& s : header.signals) {
    if (s.format != 212) throw Error(ErrorKind::kUnsupportedFormat, "only format 212 is supported");
    if (s.file_name != header.signals[0].file_name)
      throw Error(ErrorKind::kHeaderMismatch, "signals stored in separate files are not supported");
  }
  const std::size_t channels = header.n_signals;
  std::size_t frames = header.n_samples;
  if (frames == 0) frames = (bytes.size() * 2 / 3) / channels;
  if (frames == 0) throw Error(ErrorKind::kTruncatedPayload, "no samples in payload");
  const std::vector<int> raw = unpack_212(bytes, frames * channels);

  std::vector<dsp::Signal> out(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    out[c].fs = header.fs;
    out[c].samples.resize(frames);
    const auto& spec = header.signals[c];
    for (std::size_t t = 0; t < frames; ++t)
      out[c].samples[t] = (static_cast<double>(raw[t * channels + c]) - spec.baseline) / spec.gain;
  }
  return out;
}

std::vector<Annotation> parse_wfdb_annotations(std::span<const unsigned char> bytes) {
  namespace code = annotation_code;
  std::vector<Annotation> out;
  std::int64_t time = 0;
  int channel = 0;
  std::size_t pos = 0;
  auto word_at = [&](std::size_t p) { return static_cast<unsigned>(bytes[p]) | (static_cast<unsigned>(bytes[p + 1]) << 8); };

  while (true) {
    if (pos + 2 > bytes.size()) {
      if (pos == bytes.size()) throw Error(ErrorKind::kUnterminatedStream, "annotation stream has no terminator");
      throw Error(ErrorKind::kTruncatedStream, "odd trailing byte in annotation stream");
    }
    const unsigned word = word_at(pos);
    pos += 2;
    const int type = static_cast<int>(word >> 10);
    const int delta = static_cast<int>(word & 0x3FF);
    if (type == 0 && delta == 0) break;

    switch (type) {
      case code::kSkip: {
        if (pos + 4 > bytes.size()) throw Error(ErrorKind::kTruncatedStream, "SKIP without its interval");
        const std::uint32_t hi = word_at(pos), lo = word_at(pos + 2);
        pos += 4;
        time += static_cast<std::int32_t>((hi << 16) | lo);
        break;
      }
      case code::kNum:
      case code::kSub:
        break;
      case code::kChn:
        channel = delta;
        if (!out.empty()) out.back().channel = delta;
        break;
      case code::kAux: {
        const std::size_t len = static_cast<std::size_t>(delta) + (delta % 2);
        if (pos + len > bytes.size()) throw Error(ErrorKind::kTruncatedStream, "AUX text runs past the stream");
        pos += len;
        break;
      }
      default:
        time += delta;
        if (type >= 1 && type <= code::kMaxBeatCode) {
          if (!out.empty() && time < out.back().sample_index)
            throw Error(ErrorKind::kTruncatedStream, "annotation times decrease");
          out.push_back(Annotation{time, type, channel});
        }
        break;
    }
  }
  return out;
}

const std::vector<int>& beat_vocabulary() {
  static const std::vector<int> codes{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 34, 38};
  return codes;
}

const std::vector<std::string>& beat_symbols() {
  static const std::vector<std::string> symbols{"N", "L", "R", "a", "V", "F", "J", "A",
                                                "S", "E", "j", "/", "Q", "e", "f"};
  return symbols;
}

BeatExtraction extract_beats(std::span<const dsp::Signal> signals, std::span<const Annotation> annotations,
                             std::size_t window) {
  if (signals.empty()) throw Error(ErrorKind::kInvalidArgument, "no signals");
  if (window == 0 || window % 2 != 0) throw Error(ErrorKind::kInvalidArgument, "beat window must be even");
  const auto& vocab = beat_vocabulary();
  const dsp::Signal& lead = signals[0];
  const auto half = static_cast<std::int64_t>(window / 2);
  const auto length = static_cast<std::int64_t>(lead.size());

  BeatExtraction result;
  result.dataset.fs = lead.fs;
  result.dataset.class_names = beat_symbols();
  std::size_t ordinal = 0;
  for (const Annotation& a : annotations) {
    const auto it = std::find(vocab.begin(), vocab.end(), a.type_code);
    if (it == vocab.end()) {
      ++result.dropped_unmapped;
      continue;
    }
    const std::int64_t first = a.sample_index - half;
    if (first < 0 || a.sample_index + half > length) {
      ++result.skipped_out_of_bounds;
      continue;
    }
    const auto begin = lead.samples.begin() + first;
    const auto class_id = static_cast<std::size_t>(it - vocab.begin());
    dsp::Segment seg{std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(window)), ordinal++,
                     static_cast<int>(class_id)};
    result.dataset.items.push_back(LabeledSegment{std::move(seg), class_id});
  }
  if (result.dropped_unmapped > 0)
    std::clog << "extract_beats: dropped " << result.dropped_unmapped << " annotations outside the beat vocabulary\n";
  if (result.dataset.items.empty()) throw Error(ErrorKind::kEmptyResult, "no beats could be extracted");
  return result;
}

WfdbRecord load_wfdb_record(const std::filesystem::path& base, std::string_view annotator) {
  WfdbRecord rec;
  auto with_ext = [&](std::string_view ext) {
    std::filesystem::path p = base;
    p += ".";
    p += std::string(ext);
    return p;
  };
  rec.header = parse_wfdb_header(read_file(with_ext("hea")));
  const auto dat_path = base.parent_path() / rec.header.signals.at(0).file_name;
  rec.signals = parse_wfdb_212(read_bytes(dat_path), rec.header);
  rec.annotations = parse_wfdb_annotations(read_bytes(with_ext(annotator)));
  return rec;
}

// ---- splitting and batching ----

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error(ErrorKind::kInvalidArgument, "fraction must be in (0, 1)");
  if (ds.items.empty()) throw Error(ErrorKind::kEmptyDataset, "cannot split an empty dataset");
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t i = 0; i < ds.items.size(); ++i) by_class.at(ds.items[i].class_id).push_back(i);

  Rng rng(derive_seed(seed, 0x5eed5717));
  std::vector<std::size_t> first, second;
  for (auto& members : by_class) {
    rng.shuffle(std::span<std::size_t>(members));
    std::size_t take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    if (members.size() == 1) take = 1;
    first.insert(first.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    second.insert(second.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());

  auto subset = [&](const std::vector<std::size_t>& idx, SplitTag tag) {
    Dataset out;
    out.class_names = ds.class_names;
    out.fs = ds.fs;
    out.split = tag;
    out.items.reserve(idx.size());
    for (std::size_t i : idx) out.items.push_back(ds.items[i]);
    return out;
  };
  return {subset(first, ds.split), subset(second, SplitTag::kValidation)};
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t epoch) {
  if (batch_size == 0) throw Error(ErrorKind::kInvalidArgument, "batch size must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, epoch));
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace gafnet::data
