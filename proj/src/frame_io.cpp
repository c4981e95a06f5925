#include "palmar/frame_io.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace palmar {

using nlohmann::json;

std::string to_string(Sensor s) {
  switch (s) {
    case Sensor::lidar: return "lidar";
    case Sensor::mmwave: return "mmwave";
    case Sensor::synthetic: return "synthetic";
  }
  return "synthetic";
}

Sensor sensor_from_string(const std::string& s) {
  if (s == "lidar") return Sensor::lidar;
  if (s == "mmwave") return Sensor::mmwave;
  if (s == "synthetic") return Sensor::synthetic;
  throw ValidationError("unknown sensor kind: " + s);
}

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file for reading: " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open file for writing: " + path);
  return out;
}

json parse_line(const std::string& line, const std::string& path, long lineno) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    std::ostringstream msg;
    msg << path << ":" << lineno << ": " << e.what();
    throw ParseError(msg.str());
  }
}

Vec3 read_vec3(const json& arr, const std::string& path, long lineno) {
  if (!arr.is_array() || arr.size() != 3)
    throw ParseError(path + ":" + std::to_string(lineno) + ": point is not a 3-array");
  Vec3 p;
  for (int k = 0; k < 3; ++k) {
    if (!arr[k].is_number())
      throw ParseError(path + ":" + std::to_string(lineno) + ": point component is not numeric");
    p[k] = arr[k].get<double>();
  }
  if (!p.allFinite())
    throw ValidationError(path + ":" + std::to_string(lineno) + ": non-finite point");
  return p;
}

}  // namespace

std::vector<Frame> read_frames(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<Frame> frames;
  std::string line;
  long lineno = 0;
  double prev_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = parse_line(line, path, lineno);
    Frame f;
    if (!j.contains("t") || !j["t"].is_number())
      throw ParseError(path + ":" + std::to_string(lineno) + ": missing numeric \"t\"");
    f.t = j["t"].get<double>();
    if (!std::isfinite(f.t))
      throw ValidationError(path + ":" + std::to_string(lineno) + ": non-finite timestamp");
    if (f.t < prev_t)
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": timestamps must be monotone non-decreasing");
    prev_t = f.t;
    f.sensor = j.contains("sensor") ? sensor_from_string(j["sensor"].get<std::string>())
                                    : Sensor::synthetic;
    if (!j.contains("points") || !j["points"].is_array())
      throw ParseError(path + ":" + std::to_string(lineno) + ": missing \"points\" array");
    f.points.reserve(j["points"].size());
    for (const auto& pt : j["points"]) f.points.push_back(read_vec3(pt, path, lineno));
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_frames(const std::vector<Frame>& frames, const std::string& path) {
  std::ofstream out = open_output(path);
  for (const Frame& f : frames) {
    if (f.coords != Coords::cartesian)
      throw ValidationError("write_frames: spherical frames are in-memory only");
    if (!std::isfinite(f.t)) throw ValidationError("write_frames: non-finite timestamp");
    json pts = json::array();
    for (const Vec3& p : f.points) {
      if (!p.allFinite()) throw ValidationError("write_frames: non-finite point coordinate");
      pts.push_back({p.x(), p.y(), p.z()});
    }
    json j{{"t", f.t}, {"sensor", to_string(f.sensor)}, {"points", std::move(pts)}};
    out << j.dump() << '\n';
  }
  if (!out) throw ValidationError("write_frames: write failed: " + path);
}

GroundTruth read_ground_truth(const std::string& path) {
  std::ifstream in = open_input(path);
  GroundTruth truth;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = parse_line(line, path, lineno);
    TruthFrame tf;
    if (!j.contains("t") || !j["t"].is_number())
      throw ParseError(path + ":" + std::to_string(lineno) + ": missing numeric \"t\"");
    tf.t = j["t"].get<double>();
    for (const auto& pj : j.value("persons", json::array())) {
      PersonTruth p;
      p.id = pj.at("id").get<int>();
      p.head = read_vec3(pj.at("c"), path, lineno);
      p.activity = pj.value("act", "");
      tf.persons.push_back(std::move(p));
    }
    truth.push_back(std::move(tf));
  }
  return truth;
}

void write_ground_truth(const GroundTruth& truth, const std::string& path) {
  std::ofstream out = open_output(path);
  for (const TruthFrame& tf : truth) {
    json persons = json::array();
    for (const PersonTruth& p : tf.persons) {
      persons.push_back({{"id", p.id},
                         {"c", {p.head.x(), p.head.y(), p.head.z()}},
                         {"act", p.activity}});
    }
    json j{{"t", tf.t}, {"persons", std::move(persons)}};
    out << j.dump() << '\n';
  }
  if (!out) throw ValidationError("write_ground_truth: write failed: " + path);
}

}  // namespace palmar
