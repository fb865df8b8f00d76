#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gafnet/dsp.hpp"

namespace gafnet::data {

enum class SplitTag { kTrain, kTest, kValidation };

struct LabeledSegment {
  dsp::Segment segment;
  std::size_t class_id = 0;
};

// Equal-length labeled segments with a class vocabulary.
struct Dataset {
  std::vector<LabeledSegment> items;
  std::vector<std::string> class_names;
  double fs = 1.0;
  SplitTag split = SplitTag::kTrain;

  std::size_t size() const noexcept { return items.size(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::size_t length() const { return items.empty() ? 0 : items.front().segment.values.size(); }
  std::vector<std::size_t> class_counts() const;
};

// UCR text archive: one series per line, first field the integer class
// label, fields separated by tabs, commas or spaces. Labels are remapped to
// 0-based ids in ascending order of the original values.
Dataset load_ucr(const std::filesystem::path& path, double fs = 1.0);
Dataset parse_ucr(std::string_view text, double fs = 1.0);

// Same, but reusing a vocabulary (original label strings in id order) so
// that test files share the training ids. Unknown labels are an error.
Dataset parse_ucr(std::string_view text, const std::vector<std::string>& vocabulary, double fs = 1.0);
Dataset load_ucr(const std::filesystem::path& path, const std::vector<std::string>& vocabulary,
                 double fs = 1.0);

struct WfdbSignalSpec {
  std::string file_name;
  int format = 0;
  double gain = 200.0;  // adu per mV
  double baseline = 0.0;
  int adc_zero = 0;
  std::string units;
  std::string description;
};

struct WfdbHeader {
  std::string record_name;
  std::size_t n_signals = 0;
  double fs = 0.0;
  std::size_t n_samples = 0;  // 0 when the header omits it
  std::vector<WfdbSignalSpec> signals;
};

WfdbHeader parse_wfdb_header(std::string_view text);

// Decodes format-212 packed samples into one Signal per channel in mV.
std::vector<dsp::Signal> parse_wfdb_212(std::span<const unsigned char> bytes, const WfdbHeader& header);
// Raw interleaved 12-bit samples, sign-extended.
std::vector<int> unpack_212(std::span<const unsigned char> bytes, std::size_t count);

struct Annotation {
  std::int64_t sample_index = 0;
  int type_code = 0;
  int channel = 0;
};

namespace annotation_code {
inline constexpr int kMaxBeatCode = 49;
inline constexpr int kSkip = 59;
inline constexpr int kNum = 60;
inline constexpr int kSub = 61;
inline constexpr int kChn = 62;
inline constexpr int kAux = 63;
}  // namespace annotation_code

// MIT annotation format. Only codes 1..49 become annotations.
std::vector<Annotation> parse_wfdb_annotations(std::span<const unsigned char> bytes);

// MIT-BIH beat codes in ascending order (N L R a V F J A S E j / Q e f).
const std::vector<int>& beat_vocabulary();
const std::vector<std::string>& beat_symbols();

struct BeatExtraction {
  Dataset dataset;
  std::size_t skipped_out_of_bounds = 0;
  std::size_t dropped_unmapped = 0;
};

// Windows [index - window/2, index + window/2) of channel 0 around each
// beat annotation. Throws Error(kEmptyResult) when nothing survives.
BeatExtraction extract_beats(std::span<const dsp::Signal> signals, std::span<const Annotation> annotations,
                             std::size_t window = 360);

// Reads <base>.hea, <base>.dat and <base>.atr (or the given annotator).
struct WfdbRecord {
  WfdbHeader header;
  std::vector<dsp::Signal> signals;
  std::vector<Annotation> annotations;
};
WfdbRecord load_wfdb_record(const std::filesystem::path& base, std::string_view annotator = "atr");

// Per-class proportional split: the first part receives round(fraction * n)
// of each class. Classes with a single sample go to the first part.
std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double fraction, std::uint64_t seed);

// Index batches for one epoch, reshuffled deterministically per (seed,
// epoch). The final partial batch is kept.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t epoch);

}  // namespace gafnet::data
