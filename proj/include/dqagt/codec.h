#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dqagt {

using Code = std::vector<std::int64_t>;

// (2L+1)-level uniform quantizer:
//   q(x) = 0           for -1/2 <= x <= 1/2
//   q(x) = i           for (2i-1)/2 < x <= (2i+1)/2, i = 1..L
//   q(x) = L           for x > (2L+1)/2
//   q(x) = -q(-x)      for x < -1/2
class UniformQuantizer {
 public:
  explicit UniformQuantizer(std::int64_t levels);

  std::int64_t levels() const { return levels_; }
  // Throws InvalidValueError on NaN or infinity.
  std::int64_t quantize(double x) const;
  Code quantize(const Eigen::VectorXd& v) const;
  // True when |x| lies beyond the last cell, i.e. q clamps.
  bool saturates(double x) const;

 private:
  std::int64_t levels_;
};

// ceil(log2(2L)); the zero symbol is not transmitted.
int bits_per_scalar(std::int64_t levels);

// l(k) = l0 * gamma^k, recomputed from k on every call.
class ScalingSchedule {
 public:
  ScalingSchedule(double l0, double gamma);
  double l0() const { return l0_; }
  double gamma() const { return gamma_; }
  double at(std::int64_t k) const;

 private:
  double l0_;
  double gamma_;
};

// One direction of a difference-quantized channel. The encoder side keeps a
// mirror of what every receiver reconstructs; a decoder-only instance is
// built the same way and fed codes through decode().
class ChannelCodec {
 public:
  ChannelCodec(UniformQuantizer quantizer, ScalingSchedule schedule, int dim,
               bool strict = false);

  // code = Q((value - recon) / l(k)), then recon += l(k) * code.
  Code encode(const Eigen::VectorXd& value);
  // recon += l(k) * code. Throws ProtocolError for codes outside [-L, L].
  const Eigen::VectorXd& decode(std::span<const std::int64_t> code);

  const Eigen::VectorXd& recon() const { return recon_; }
  std::int64_t step() const { return step_; }
  int dim() const { return dim_; }
  std::int64_t saturation_count() const { return saturations_; }
  std::int64_t bits_sent() const { return bits_; }
  // Charges only nonzero codes.
  std::int64_t bits_sent_nonzero() const { return bits_nonzero_; }
  const UniformQuantizer& quantizer() const { return quantizer_; }
  const ScalingSchedule& schedule() const { return schedule_; }

 private:
  void apply(std::span<const std::int64_t> code);

  UniformQuantizer quantizer_;
  ScalingSchedule schedule_;
  int dim_;
  bool strict_;
  Eigen::VectorXd recon_;
  std::int64_t step_ = 0;
  std::int64_t saturations_ = 0;
  std::int64_t bits_ = 0;
  std::int64_t bits_nonzero_ = 0;
};

// Reconstructions after each code, from a fresh decoder.
std::vector<Eigen::VectorXd> replay_stream(const std::vector<Code>& codes,
                                           const UniformQuantizer& quantizer,
                                           const ScalingSchedule& schedule,
                                           int dim);

// Code stream CSV: round,agent,stream,code_0,...,code_{r-1}. Stream is "chi"
// or "y".
struct CodeRecord {
  std::int64_t round = 0;
  int agent = 0;
  std::string stream;
  Code code;
};

void write_code_stream(std::ostream& out, const std::vector<CodeRecord>& records,
                       int dim);
std::vector<CodeRecord> read_code_stream(std::istream& in);

}  // namespace dqagt
