#include "flowtrack/sequence_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flowtrack/errors.hpp"

namespace fs = std::filesystem;

namespace flowtrack {

namespace {

constexpr char kFlowMagic[4] = {'F', 'L', 'W', '1'};

std::string frame_name(std::int64_t frame, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06lld%s", static_cast<long long>(frame), ext);
  return buf;
}

void format_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s, const fs::path& file) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("malformed number '" + s + "' in " + file.string());
  }
}

std::int64_t to_int(const std::string& s, const fs::path& file) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("malformed integer '" + s + "' in " + file.string());
  }
}

struct PgmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
};

PgmHeader read_pgm_header(std::ifstream& in, const fs::path& path) {
  std::string magic;
  in >> magic;
  if (magic != "P5") throw DataError("not a binary PGM: " + path.string());
  PgmHeader h;
  // Fields may be separated by whitespace and '#' comments.
  int* fields[3] = {&h.width, &h.height, &h.maxval};
  for (int* f : fields) {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    if (!(in >> *f)) throw DataError("truncated PGM header: " + path.string());
  }
  in.get();  // single whitespace before the raster
  return h;
}

}  // namespace

void write_pgm16(const fs::path& path, const DepthMap& depth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << depth.width << " " << depth.height << "\n65535\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(depth.width) * 2);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const float d = depth.at(u, v);
      std::uint16_t mm = 0;
      if (DepthMap::is_valid(d)) {
        const double scaled = std::lround(static_cast<double>(d) * 1000.0);
        mm = static_cast<std::uint16_t>(std::clamp(scaled, 1.0, 65535.0));
      }
      row[2 * u] = static_cast<unsigned char>(mm >> 8);  // big-endian per PGM
      row[2 * u + 1] = static_cast<unsigned char>(mm & 0xff);
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw DataError("short write to " + path.string());
}

DepthMap read_pgm16(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const PgmHeader h = read_pgm_header(in, path);
  if (h.maxval != 65535) throw DataError("expected 16-bit PGM: " + path.string());
  DepthMap depth(h.width, h.height);
  std::vector<unsigned char> row(static_cast<std::size_t>(h.width) * 2);
  for (int v = 0; v < h.height; ++v) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw DataError("truncated PGM raster: " + path.string());
    for (int u = 0; u < h.width; ++u) {
      const std::uint16_t mm = static_cast<std::uint16_t>((row[2 * u] << 8) | row[2 * u + 1]);
      depth.set(u, v, mm == 0 ? 0.0f : static_cast<float>(mm) / 1000.0f);
    }
  }
  return depth;
}

void write_pgm8(const fs::path& path, const Mask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << mask.width() << " " << mask.height() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(mask.width()));
  const auto& bits = mask.bitmap();
  for (int v = 0; v < mask.height(); ++v) {
    for (int u = 0; u < mask.width(); ++u) {
      row[static_cast<std::size_t>(u)] =
          bits[static_cast<std::size_t>(v) * mask.width() + u] ? 255 : 0;
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw DataError("short write to " + path.string());
}

Mask read_pgm8(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const PgmHeader h = read_pgm_header(in, path);
  if (h.maxval != 255) throw DataError("expected 8-bit PGM: " + path.string());
  Mask mask(h.width, h.height);
  std::vector<unsigned char> row(static_cast<std::size_t>(h.width));
  for (int v = 0; v < h.height; ++v) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw DataError("truncated PGM raster: " + path.string());
    for (int u = 0; u < h.width; ++u) {
      if (row[static_cast<std::size_t>(u)] != 0) mask.insert(u, v);
    }
  }
  return mask;
}

void write_flow_file(const fs::path& path, const FlowField& flow) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::uint32_t w = static_cast<std::uint32_t>(flow.width);
  const std::uint32_t h = static_cast<std::uint32_t>(flow.height);
  out.write(kFlowMagic, 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(flow.data.data()),
            static_cast<std::streamsize>(flow.data.size() * sizeof(float)));
  if (!out) throw DataError("short write to " + path.string());
}

FlowField read_flow_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  std::uint32_t w = 0, h = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  if (!in || std::memcmp(magic, kFlowMagic, 4) != 0) {
    throw DataError("bad flow header: " + path.string());
  }
  if (w == 0 || h == 0 || w > 1u << 20 || h > 1u << 20) {
    throw DataError("implausible flow dimensions in " + path.string());
  }
  FlowField flow(static_cast<int>(w), static_cast<int>(h));
  in.read(reinterpret_cast<char*>(flow.data.data()),
          static_cast<std::streamsize>(flow.data.size() * sizeof(float)));
  if (!in) throw DataError("truncated flow raster: " + path.string());
  return flow;
}

int write_sequence(const fs::path& dir, SceneSimulator& sim) {
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "flow");
  fs::create_directories(dir / "mask");

  {
    std::ofstream cam(dir / "camera.cfg");
    if (!cam) throw DataError("cannot write " + (dir / "camera.cfg").string());
    const CameraIntrinsics& i = sim.intrinsics();
    cam.precision(17);
    cam << "fx=" << i.fx << "\nfy=" << i.fy << "\ncx=" << i.cx << "\ncy=" << i.cy
        << "\nwidth=" << i.width << "\nheight=" << i.height << "\nfps=" << sim.fps() << "\n";
  }
  sim.mesh().save_obj((dir / "mesh.obj").string());

  std::ofstream masks_idx(dir / "masks.idx");
  std::ofstream poses(dir / "poses.csv");
  std::ofstream gt(dir / "ground_truth.csv");
  poses << "available,origin,tx,ty,tz,qw,qx,qy,qz,outlier\n";
  gt << "frame,tx,ty,tz,qw,qx,qy,qz,vox,voy,voz,wx,wy,wz\n";

  const auto csv_pose = [](std::string& line, const Pose& p) {
    format_double(line, p.t.x()); line += ',';
    format_double(line, p.t.y()); line += ',';
    format_double(line, p.t.z()); line += ',';
    format_double(line, p.q.w()); line += ',';
    format_double(line, p.q.x()); line += ',';
    format_double(line, p.q.y()); line += ',';
    format_double(line, p.q.z());
  };

  int written = 0;
  while (auto frame = sim.next()) {
    const std::int64_t k = frame->frame;
    write_pgm16(dir / "depth" / frame_name(k, ".pgm"), frame->depth);
    if (k > 0) write_flow_file(dir / "flow" / frame_name(k, ".flo"), frame->flow);

    for (const auto& ev : frame->mask_events) {
      const std::string rel = "mask/" + frame_name(ev.origin, ".pgm");
      if (!fs::exists(dir / rel)) write_pgm8(dir / rel, ev.mask);
      masks_idx << ev.available << " " << ev.origin << " " << rel << "\n";
    }
    for (const auto& ev : frame->pose_events) {
      std::string line = std::to_string(ev.available) + "," + std::to_string(ev.origin) + ",";
      csv_pose(line, ev.pose);
      line += ",";
      line += ev.outlier ? "1" : "0";
      poses << line << "\n";
    }
    {
      std::string line = std::to_string(k) + ",";
      csv_pose(line, frame->pose);
      line += ',';
      format_double(line, frame->twist.v_o.x()); line += ',';
      format_double(line, frame->twist.v_o.y()); line += ',';
      format_double(line, frame->twist.v_o.z()); line += ',';
      format_double(line, frame->twist.omega.x()); line += ',';
      format_double(line, frame->twist.omega.y()); line += ',';
      format_double(line, frame->twist.omega.z());
      gt << line << "\n";
    }
    ++written;
  }
  return written;
}

SequenceReader::SequenceReader(const fs::path& dir) : dir_(dir) {
  // camera.cfg
  {
    std::ifstream cam(dir_ / "camera.cfg");
    if (!cam) throw DataError("missing camera.cfg in " + dir_.string());
    std::string line;
    while (std::getline(cam, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string val = line.substr(eq + 1);
      if (key == "fx") intr_.fx = to_double(val, dir_ / "camera.cfg");
      else if (key == "fy") intr_.fy = to_double(val, dir_ / "camera.cfg");
      else if (key == "cx") intr_.cx = to_double(val, dir_ / "camera.cfg");
      else if (key == "cy") intr_.cy = to_double(val, dir_ / "camera.cfg");
      else if (key == "width") intr_.width = static_cast<int>(to_int(val, dir_ / "camera.cfg"));
      else if (key == "height") intr_.height = static_cast<int>(to_int(val, dir_ / "camera.cfg"));
      else if (key == "fps") fps_ = to_double(val, dir_ / "camera.cfg");
    }
    try {
      intr_.validate();
    } catch (const std::exception& e) {
      throw DataError(std::string("invalid camera.cfg: ") + e.what());
    }
    if (!(fps_ > 0.0)) throw DataError("invalid fps in camera.cfg");
  }

  // depth frames must be contiguous from zero
  int count = 0;
  while (fs::exists(dir_ / "depth" / frame_name(count, ".pgm"))) ++count;
  if (count == 0) throw DataError("no depth frames found in " + dir_.string());
  for (const auto& entry : fs::directory_iterator(dir_ / "depth")) {
    const std::string stem = entry.path().stem().string();
    std::int64_t idx = 0;
    try {
      idx = std::stoll(stem);
    } catch (const std::exception&) {
      throw DataError("unexpected depth file " + entry.path().string());
    }
    if (idx < 0 || idx >= count) {
      throw DataError("depth frames not contiguous: unexpected frame " + stem);
    }
  }
  frames_ = count;
  for (std::int64_t k = 1; k < frames_; ++k) {
    if (!fs::exists(dir_ / "flow" / frame_name(k, ".flo"))) {
      throw DataError("missing flow file for frame " + std::to_string(k));
    }
  }

  // masks.idx
  if (fs::exists(dir_ / "masks.idx")) {
    std::ifstream idx(dir_ / "masks.idx");
    std::string line;
    while (std::getline(idx, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ss(line);
      MaskIndexEntry e;
      if (!(ss >> e.available >> e.origin >> e.file)) {
        throw DataError("malformed masks.idx line: " + line);
      }
      if (e.origin > e.available) {
        throw DataError("masks.idx: origin after availability for frame " +
                        std::to_string(e.available));
      }
      mask_index_.push_back(std::move(e));
    }
    std::stable_sort(mask_index_.begin(), mask_index_.end(),
                     [](const auto& a, const auto& b) { return a.available < b.available; });
  }

  // poses.csv
  if (fs::exists(dir_ / "poses.csv")) {
    std::ifstream in(dir_ / "poses.csv");
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (first) {
        first = false;
        continue;  // header
      }
      const auto f = split_csv(line);
      if (f.size() != 10) throw DataError("malformed poses.csv line: " + line);
      PoseEvent ev;
      ev.available = to_int(f[0], dir_ / "poses.csv");
      ev.origin = to_int(f[1], dir_ / "poses.csv");
      ev.pose.t = Vec3(to_double(f[2], dir_), to_double(f[3], dir_), to_double(f[4], dir_));
      ev.pose.q = UnitQuaternion(to_double(f[5], dir_), to_double(f[6], dir_),
                                 to_double(f[7], dir_), to_double(f[8], dir_));
      ev.outlier = to_int(f[9], dir_ / "poses.csv") != 0;
      if (ev.origin > ev.available) {
        throw DataError("poses.csv: origin after availability for frame " +
                        std::to_string(ev.available));
      }
      pose_events_.push_back(std::move(ev));
    }
    std::stable_sort(pose_events_.begin(), pose_events_.end(),
                     [](const auto& a, const auto& b) { return a.available < b.available; });
  }

  // ground_truth.csv
  if (fs::exists(dir_ / "ground_truth.csv")) {
    std::ifstream in(dir_ / "ground_truth.csv");
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (first) {
        first = false;
        continue;
      }
      const auto f = split_csv(line);
      if (f.size() != 14) throw DataError("malformed ground_truth.csv line: " + line);
      GroundTruthRow row;
      row.frame = to_int(f[0], dir_ / "ground_truth.csv");
      row.pose.t = Vec3(to_double(f[1], dir_), to_double(f[2], dir_), to_double(f[3], dir_));
      row.pose.q = UnitQuaternion(to_double(f[4], dir_), to_double(f[5], dir_),
                                  to_double(f[6], dir_), to_double(f[7], dir_));
      row.twist.v_o = Vec3(to_double(f[8], dir_), to_double(f[9], dir_), to_double(f[10], dir_));
      row.twist.omega =
          Vec3(to_double(f[11], dir_), to_double(f[12], dir_), to_double(f[13], dir_));
      ground_truth_.push_back(std::move(row));
    }
  }
}

DepthMap SequenceReader::read_depth(std::int64_t frame) const {
  DepthMap d = read_pgm16(dir_ / "depth" / frame_name(frame, ".pgm"));
  if (d.width != intr_.width || d.height != intr_.height) {
    throw DataError("depth frame " + std::to_string(frame) + " size mismatch");
  }
  return d;
}

FlowField SequenceReader::read_flow(std::int64_t frame) const {
  FlowField f = read_flow_file(dir_ / "flow" / frame_name(frame, ".flo"));
  if (f.width != intr_.width || f.height != intr_.height) {
    throw DataError("flow frame " + std::to_string(frame) + " size mismatch");
  }
  return f;
}

Mask SequenceReader::read_mask(const MaskIndexEntry& entry) const {
  Mask m = read_pgm8(dir_ / entry.file);
  if (m.width() != intr_.width || m.height() != intr_.height) {
    throw DataError("mask " + entry.file + " size mismatch");
  }
  return m;
}

bool SequenceReader::has_mesh() const { return fs::exists(dir_ / "mesh.obj"); }

TriangleMesh SequenceReader::load_mesh() const {
  if (!has_mesh()) throw DataError("no mesh.obj in " + dir_.string());
  return TriangleMesh::load_obj((dir_ / "mesh.obj").string());
}

void write_estimates(const fs::path& path, const std::vector<EstimateRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# flowtrack estimates v1: t [m], q scalar-first, v [m/s], omega [rad/s]\n";
  out << "frame,tx,ty,tz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,pose_accepted\n";
  for (const auto& r : rows) {
    std::string line = std::to_string(r.frame);
    const double vals[] = {r.t.x(), r.t.y(), r.t.z(), r.q.w(), r.q.x(), r.q.y(), r.q.z(),
                           r.v.x(), r.v.y(), r.v.z(), r.omega.x(), r.omega.y(), r.omega.z()};
    for (double v : vals) {
      line += ',';
      format_double(line, v);
    }
    line += ',' + std::to_string(r.pose_accepted);
    out << line << "\n";
  }
}

std::vector<EstimateRow> read_estimates(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<EstimateRow> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 15) throw DataError("malformed estimates line: " + line);
    EstimateRow r;
    r.frame = to_int(f[0], path);
    r.t = Vec3(to_double(f[1], path), to_double(f[2], path), to_double(f[3], path));
    r.q = UnitQuaternion(to_double(f[4], path), to_double(f[5], path), to_double(f[6], path),
                         to_double(f[7], path));
    r.v = Vec3(to_double(f[8], path), to_double(f[9], path), to_double(f[10], path));
    r.omega = Vec3(to_double(f[11], path), to_double(f[12], path), to_double(f[13], path));
    r.pose_accepted = static_cast<int>(to_int(f[14], path));
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_velocities(const fs::path& path, const std::vector<TwistRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# flowtrack velocities v1: v_o [m/s], omega [rad/s]\n";
  out << "frame,vox,voy,voz,wx,wy,wz\n";
  for (const auto& r : rows) {
    std::string line = std::to_string(r.frame);
    const double vals[] = {r.twist.v_o.x(), r.twist.v_o.y(), r.twist.v_o.z(),
                           r.twist.omega.x(), r.twist.omega.y(), r.twist.omega.z()};
    for (double v : vals) {
      line += ',';
      format_double(line, v);
    }
    out << line << "\n";
  }
}

std::vector<TwistRow> read_velocities(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<TwistRow> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 7) throw DataError("malformed velocities line: " + line);
    TwistRow r;
    r.frame = to_int(f[0], path);
    r.twist.v_o = Vec3(to_double(f[1], path), to_double(f[2], path), to_double(f[3], path));
    r.twist.omega = Vec3(to_double(f[4], path), to_double(f[5], path), to_double(f[6], path));
    rows.push_back(r);
  }
  return rows;
}

}  // namespace flowtrack
