#include "chillopt/types.hpp"

#include "chillopt/error.hpp"

namespace chillopt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::LoadInfeasible: return "LoadInfeasible";
    case ErrorCode::EquipmentOff: return "EquipmentOff";
    case ErrorCode::OutOfOrder: return "OutOfOrder";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::ZeroActual: return "ZeroActual";
    case ErrorCode::DoesNotFit: return "DoesNotFit";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::UntrainedModule: return "UntrainedModule";
    case ErrorCode::NoFeasiblePoint: return "NoFeasiblePoint";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

void to_json(nlohmann::json& j, const Range& r) { j = nlohmann::json::array({r.lo, r.hi}); }

void from_json(const nlohmann::json& j, Range& r) {
  if (j.is_array()) {
    r.lo = j.at(0).get<double>();
    r.hi = j.at(1).get<double>();
  } else {
    r.lo = j.at("lo").get<double>();
    r.hi = j.at("hi").get<double>();
  }
}

void to_json(nlohmann::json& j, const ControlVector& c) {
  j = {{"cwp_speed", c.cwp_speed}, {"chwp_speed", c.chwp_speed}, {"ct_speed", c.ct_speed}};
}

void from_json(const nlohmann::json& j, ControlVector& c) {
  j.at("cwp_speed").get_to(c.cwp_speed);
  j.at("chwp_speed").get_to(c.chwp_speed);
  j.at("ct_speed").get_to(c.ct_speed);
}

void to_json(nlohmann::json& j, const OnOff& o) {
  j = {{"on_ch", o.ch}, {"on_ct", o.ct}, {"on_cwp", o.cwp}, {"on_chwp", o.chwp}};
}

void from_json(const nlohmann::json& j, OnOff& o) {
  j.at("on_ch").get_to(o.ch);
  j.at("on_ct").get_to(o.ct);
  j.at("on_cwp").get_to(o.cwp);
  j.at("on_chwp").get_to(o.chwp);
}

void to_json(nlohmann::json& j, const SensorRecord& r) {
  j = nlohmann::json::object();
  j["ts"] = r.ts;
  j["db"] = r.weather.db;
  j["rh"] = r.weather.rh;
  j["cwp_speed"] = r.control.cwp_speed;
  j["chwp_speed"] = r.control.chwp_speed;
  j["ct_speed"] = r.control.ct_speed;
  j["on_ch"] = r.on.ch;
  j["on_ct"] = r.on.ct;
  j["on_cwp"] = r.on.cwp;
  j["on_chwp"] = r.on.chwp;
  j["chfhdr"] = r.chfhdr;
  j["cwfhdr"] = r.cwfhdr;
  j["cwshdr"] = r.cwshdr;
  j["chsp"] = r.chsp;
  j["load_rt"] = r.load_rt;
  j["chkw"] = r.chkw;
  j["ctkw"] = r.ctkw;
  j["cwpkw"] = r.cwpkw;
  j["chwpkw"] = r.chwpkw;
  j["total_kw"] = r.total_kw;
}

void from_json(const nlohmann::json& j, SensorRecord& r) {
  j.at("ts").get_to(r.ts);
  j.at("db").get_to(r.weather.db);
  j.at("rh").get_to(r.weather.rh);
  j.at("cwp_speed").get_to(r.control.cwp_speed);
  j.at("chwp_speed").get_to(r.control.chwp_speed);
  j.at("ct_speed").get_to(r.control.ct_speed);
  from_json(j, r.on);
  j.at("chfhdr").get_to(r.chfhdr);
  j.at("cwfhdr").get_to(r.cwfhdr);
  j.at("cwshdr").get_to(r.cwshdr);
  j.at("chsp").get_to(r.chsp);
  j.at("load_rt").get_to(r.load_rt);
  j.at("chkw").get_to(r.chkw);
  j.at("ctkw").get_to(r.ctkw);
  j.at("cwpkw").get_to(r.cwpkw);
  j.at("chwpkw").get_to(r.chwpkw);
  j.at("total_kw").get_to(r.total_kw);
}

}  // namespace chillopt
