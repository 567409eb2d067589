// Copyright (c) 2026 The lensalign authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <json.hpp>

#include <string>

#include "lensalign/types.hpp"

namespace lensalign {

using json = nlohmann::json;

// JSON mappings for the simulator configuration types. nlohmann::json keeps
// object keys sorted, so dumps of these are canonical and hashable.

inline json to_json(const MisalignmentOffset& o) {
  return {{"dx_um", o.dx_um}, {"dy_um", o.dy_um}};
}
inline MisalignmentOffset offset_from_json(const json& j) {
  return {j.at("dx_um").get<double>(), j.at("dy_um").get<double>()};
}

inline json to_json(const IspConfig& c) {
  return {{"gamma_lo", c.gamma_lo},       {"gamma_hi", c.gamma_hi},
          {"scale_lo", c.scale_lo},       {"scale_hi", c.scale_hi},
          {"noise_sigma", c.noise_sigma}, {"quantize_bits", c.quantize_bits},
          {"extra_blur_sigma", c.extra_blur_sigma}};
}
inline IspConfig isp_from_json(const json& j) {
  IspConfig c;
  c.gamma_lo = j.at("gamma_lo").get<double>();
  c.gamma_hi = j.at("gamma_hi").get<double>();
  c.scale_lo = j.at("scale_lo").get<double>();
  c.scale_hi = j.at("scale_hi").get<double>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.quantize_bits = j.at("quantize_bits").get<int>();
  c.extra_blur_sigma = j.at("extra_blur_sigma").get<double>();
  return c;
}

inline json to_json(const PsfFamilyParams& p) {
  return {{"base_sigma_px", p.base_sigma_px},
          {"astig_coeff_px_per_um", p.astig_coeff_px_per_um},
          {"coma_coeff_px_per_um", p.coma_coeff_px_per_um},
          {"smoothing_extra_px", p.smoothing_extra_px}};
}
inline PsfFamilyParams psf_from_json(const json& j) {
  PsfFamilyParams p;
  p.base_sigma_px = j.at("base_sigma_px").get<double>();
  p.astig_coeff_px_per_um = j.at("astig_coeff_px_per_um").get<double>();
  p.coma_coeff_px_per_um = j.at("coma_coeff_px_per_um").get<double>();
  p.smoothing_extra_px = j.at("smoothing_extra_px").get<double>();
  return p;
}

inline json to_json(const DomainConfig& d) {
  json fields = json::array();
  for (const auto& f : d.fields) fields.push_back({{"fx", f.fx}, {"fy", f.fy}});
  return {{"label", to_string(d.label)},
          {"psf", to_json(d.psf)},
          {"isp", to_json(d.isp)},
          {"image_side", d.image_side},
          {"fields", fields}};
}
inline DomainConfig domain_from_json(const json& j) {
  DomainConfig d;
  d.label = domain_label_from_string(j.at("label").get<std::string>());
  d.psf = psf_from_json(j.at("psf"));
  d.isp = isp_from_json(j.at("isp"));
  d.image_side = j.at("image_side").get<int>();
  d.fields.clear();
  for (const auto& f : j.at("fields"))
    d.fields.push_back({f.at("fx").get<double>(), f.at("fy").get<double>()});
  return d;
}

inline json to_json(const LensInstance& l) {
  return {{"lens_id", l.lens_id},
          {"tolerance_shift", to_json(l.tolerance_shift)},
          {"gain_parallel", l.gain_parallel},
          {"gain_perp", l.gain_perp},
          {"coma_gain", l.coma_gain},
          {"rng_seed", l.rng_seed}};
}
inline LensInstance lens_from_json(const json& j) {
  LensInstance l;
  l.lens_id = j.at("lens_id").get<int>();
  l.tolerance_shift = offset_from_json(j.at("tolerance_shift"));
  l.gain_parallel = j.at("gain_parallel").get<double>();
  l.gain_perp = j.at("gain_perp").get<double>();
  l.coma_gain = j.at("coma_gain").get<double>();
  l.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  return l;
}

}  // namespace lensalign
