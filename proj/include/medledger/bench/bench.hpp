#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace medledger::bench {

enum class BenchErrorCode { BadArgument, ServiceUnreachable, RequestFailed };

class BenchError : public std::runtime_error {
 public:
  BenchError(BenchErrorCode code, const std::string& detail);
  BenchErrorCode code() const { return code_; }

 private:
  BenchErrorCode code_;
};

// "1KB,64KB,1MB" or plain byte counts. KB and MB are powers of 1024.
std::vector<std::size_t> parse_sizes(const std::string& list);

struct BenchOptions {
  std::size_t records = 5;
  std::vector<std::size_t> sizes{1024, 64 * 1024, 1024 * 1024};
  // Talk to a running service instead of an embedded one.
  std::optional<std::string> url;
  // Embedded mode only.
  std::uint32_t difficulty_bits = 12;
  // Embedded mode: where the throwaway deployment lives. A temp dir when unset.
  std::optional<std::filesystem::path> work_dir;
};

struct BenchRow {
  std::size_t size_bytes = 0;
  std::string op;  // "upload" or "download"
  double median_ms = 0;
  double p95_ms = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  // Embedded mode: chain log growth for each uploaded record, per size.
  std::vector<std::vector<std::uint64_t>> log_growth;
};

// Upload is seal + store + anchor + mine; download is policy check + fetch +
// open. Each record gets its own patient_id so downloads fetch one blob.
BenchReport run_bench(const BenchOptions& options);

void write_csv(std::ostream& out, const BenchReport& report);

// Nearest-rank percentile of an unsorted sample; p in (0, 100].
double percentile(std::vector<double> sample, double p);

}  // namespace medledger::bench
