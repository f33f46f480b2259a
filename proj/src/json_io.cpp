#include "spm/json_io.hpp"

namespace spm {

json arch_to_json(const ArchConfig& a) {
  return json{{"channels", a.channels}, {"groups", a.groups},         {"num_classes", a.num_classes},
              {"proj_dim", a.proj_dim}, {"image_size", a.image_size}, {"gn_eps", a.gn_eps}};
}

ArchConfig arch_from_json(const json& j) {
  ArchConfig a;
  a.channels = j.at("channels").get<std::array<int, 3>>();
  a.groups = j.at("groups").get<int>();
  a.num_classes = j.at("num_classes").get<int>();
  a.proj_dim = j.at("proj_dim").get<int>();
  a.image_size = j.at("image_size").get<int>();
  a.gn_eps = j.at("gn_eps").get<double>();
  a.validate();
  return a;
}

json domain_to_json(const DomainSpec& d) {
  return json{{"name", d.name},
              {"background", to_string(d.background)},
              {"palette", to_string(d.palette)},
              {"stroke", to_string(d.stroke)},
              {"hue_shift", d.hue_shift},
              {"noise_sigma", d.noise_sigma},
              {"stroke_width", d.stroke_width},
              {"stroke_jitter", d.stroke_jitter},
              {"fill_opacity", d.fill_opacity}};
}

DomainSpec domain_from_json(const json& j) {
  DomainSpec d;
  d.name = j.at("name").get<std::string>();
  d.background = background_from_string(j.at("background").get<std::string>());
  d.palette = palette_from_string(j.at("palette").get<std::string>());
  d.stroke = stroke_from_string(j.at("stroke").get<std::string>());
  d.hue_shift = j.at("hue_shift").get<double>();
  d.noise_sigma = j.at("noise_sigma").get<double>();
  d.stroke_width = j.at("stroke_width").get<double>();
  d.stroke_jitter = j.at("stroke_jitter").get<double>();
  d.fill_opacity = j.at("fill_opacity").get<double>();
  return d;
}

}  // namespace spm
