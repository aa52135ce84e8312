#include <fstream>
#include <ostream>

#include <fmt/format.h>

#include "stride/csv.hpp"
#include "stride/training.hpp"

namespace stride::training {

void write_records_csv(std::ostream& out, std::span<const ForecastRecord> records,
                       const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
  out << kRecordCsvHeader << '\n';
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.subject, r.trial, model::to_string(r.task), r.fh_frames,
                       r.fh_ms, r.prediction, r.truth, r.abs_error(), r.torso_vel, r.toe_vel, r.cop_truth_mm);
  }
}

std::vector<ForecastRecord> read_records_csv(std::istream& in) {
  std::vector<ForecastRecord> records;
  csv::Reader reader(in, kRecordCsvHeader, "records CSV");
  while (auto row = reader.next()) {
    const auto& f = *row;
    ForecastRecord r;
    r.subject = reader.number<std::uint16_t>(f[0], 0);
    r.trial = reader.number<std::uint32_t>(f[1], 1);
    try {
      r.task = model::parse_task(std::string(f[2]));
    } catch (const std::invalid_argument& e) {
      reader.fail(std::string("column 3 ('task'): ") + e.what());
    }
    r.fh_frames = reader.number<int>(f[3], 3);
    r.fh_ms = reader.number<double>(f[4], 4);
    r.prediction = reader.number<double>(f[5], 5);
    r.truth = reader.number<double>(f[6], 6);
    reader.number<double>(f[7], 7);
    r.torso_vel = reader.number<double>(f[8], 8);
    r.toe_vel = reader.number<double>(f[9], 9);
    r.cop_truth_mm = reader.number<double>(f[10], 10);
    if (r.fh_frames < 1 || r.fh_frames > kHorizons) {
      reader.fail("column 4 ('fh_frames'): " + std::to_string(r.fh_frames) + " outside [1, 15]");
    }
    records.push_back(r);
  }
  return records;
}

std::vector<ForecastRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
  return read_records_csv(in);
}

}  // namespace stride::training
