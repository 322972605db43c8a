#include "dqagt/codec.h"

#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "dqagt/csv.h"
#include "dqagt/errors.h"

namespace dqagt {

UniformQuantizer::UniformQuantizer(std::int64_t levels) : levels_(levels) {
  if (levels < 1) throw ParameterError("quantizer needs L >= 1");
}

std::int64_t UniformQuantizer::quantize(double x) const {
  if (!std::isfinite(x)) {
    throw InvalidValueError("quantizer input is not finite");
  }
  const double mag = std::abs(x);
  // Cells are right-closed: ceil(m - 1/2) puts m = i + 1/2 in cell i.
  // m - 0.5 is exact for m < 2^52; beyond that every cell is saturated.
  const double limit = static_cast<double>(levels_);
  double cell = mag < 0x1.0p52 ? std::ceil(mag - 0.5) : limit;
  if (cell > limit) cell = limit;
  const auto i = static_cast<std::int64_t>(cell);
  return x < 0 ? -i : i;
}

Code UniformQuantizer::quantize(const Eigen::VectorXd& v) const {
  Code out(v.size());
  for (Eigen::Index k = 0; k < v.size(); ++k) out[k] = quantize(v(k));
  return out;
}

bool UniformQuantizer::saturates(double x) const {
  return std::abs(x) > static_cast<double>(levels_) + 0.5;
}

int bits_per_scalar(std::int64_t levels) {
  if (levels < 1) throw ParameterError("bits_per_scalar needs L >= 1");
  return static_cast<int>(std::bit_width(static_cast<std::uint64_t>(2 * levels - 1)));
}

ScalingSchedule::ScalingSchedule(double l0, double gamma)
    : l0_(l0), gamma_(gamma) {
  if (!(l0 > 0.0) || !std::isfinite(l0)) {
    throw ParameterError("scaling l0 must be positive");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ParameterError("scaling gamma must lie in (0, 1)");
  }
}

double ScalingSchedule::at(std::int64_t k) const {
  return l0_ * std::pow(gamma_, static_cast<double>(k));
}

ChannelCodec::ChannelCodec(UniformQuantizer quantizer, ScalingSchedule schedule,
                           int dim, bool strict)
    : quantizer_(quantizer),
      schedule_(schedule),
      dim_(dim),
      strict_(strict),
      recon_(Eigen::VectorXd::Zero(dim)) {
  if (dim < 1) throw InvalidSizeError("channel dimension must be positive");
}

Code ChannelCodec::encode(const Eigen::VectorXd& value) {
  if (value.size() != dim_) throw ShapeError("encode: value has wrong dimension");
  const double scale = schedule_.at(step_);
  Code code(dim_);
  for (int k = 0; k < dim_; ++k) {
    const double arg = (value(k) - recon_(k)) / scale;
    code[k] = quantizer_.quantize(arg);
    if (quantizer_.saturates(arg)) {
      ++saturations_;
      if (strict_) {
        throw SaturationError(step_, "quantizer saturated at step " +
                                         std::to_string(step_) + " (input " +
                                         format_double(arg) + ")");
      }
    }
  }
  const int b = bits_per_scalar(quantizer_.levels());
  bits_ += static_cast<std::int64_t>(dim_) * b;
  for (auto c : code) {
    if (c != 0) bits_nonzero_ += b;
  }
  apply(code);
  return code;
}

const Eigen::VectorXd& ChannelCodec::decode(std::span<const std::int64_t> code) {
  if (static_cast<int>(code.size()) != dim_) {
    throw ProtocolError("decode: code has " + std::to_string(code.size()) +
                        " entries, expected " + std::to_string(dim_));
  }
  const std::int64_t lim = quantizer_.levels();
  for (auto c : code) {
    if (c < -lim || c > lim) {
      throw ProtocolError("decode: code " + std::to_string(c) +
                          " outside [-L, L] at step " + std::to_string(step_));
    }
  }
  apply(code);
  return recon_;
}

void ChannelCodec::apply(std::span<const std::int64_t> code) {
  const double scale = schedule_.at(step_);
  for (int k = 0; k < dim_; ++k) {
    recon_(k) = scale * static_cast<double>(code[k]) + recon_(k);
  }
  ++step_;
}

std::vector<Eigen::VectorXd> replay_stream(const std::vector<Code>& codes,
                                           const UniformQuantizer& quantizer,
                                           const ScalingSchedule& schedule,
                                           int dim) {
  ChannelCodec decoder(quantizer, schedule, dim);
  std::vector<Eigen::VectorXd> out;
  out.reserve(codes.size());
  for (const auto& c : codes) out.push_back(decoder.decode(c));
  return out;
}

void write_code_stream(std::ostream& out, const std::vector<CodeRecord>& records,
                       int dim) {
  out << "round,agent,stream";
  for (int k = 0; k < dim; ++k) out << ",code_" << k;
  out << "\n";
  for (const auto& r : records) {
    out << r.round << ',' << r.agent << ',' << r.stream;
    for (auto c : r.code) out << ',' << c;
    out << "\n";
  }
}

std::vector<CodeRecord> read_code_stream(std::istream& in) {
  std::vector<CodeRecord> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto fields = split(trim(line), ',');
    if (fields.size() < 4) throw ConfigError("code stream row too short: " + line);
    CodeRecord r;
    r.round = parse_int(fields[0]);
    r.agent = static_cast<int>(parse_int(fields[1]));
    r.stream = fields[2];
    if (r.stream != "chi" && r.stream != "y") {
      throw ConfigError("unknown code stream '" + r.stream + "'");
    }
    for (std::size_t k = 3; k < fields.size(); ++k) {
      r.code.push_back(parse_int(fields[k]));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dqagt
