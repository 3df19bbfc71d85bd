#include "gastro/manifest.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

#include "gastro/error.hpp"
#include "gastro/mesh.hpp"
#include "gastro/ply.hpp"

namespace gastro {

using nlohmann::json;

namespace {

json ReadJson(const std::filesystem::path& path) {
  std::ifstream in(path);
  GASTRO_CHECK(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, path.string() + ": " + e.what());
  }
}

void WriteJson(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  GASTRO_CHECK(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << "\n";
  GASTRO_CHECK(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

json IntrinsicsToJson(const CameraIntrinsics& intr) {
  return {{"fx", intr.focal_x},
          {"fy", intr.focal_y},
          {"cx", intr.principal_x},
          {"cy", intr.principal_y},
          {"k", {intr.k[0], intr.k[1], intr.k[2], intr.k[3]}},
          {"width", intr.width},
          {"height", intr.height}};
}

CameraIntrinsics IntrinsicsFromJson(const json& j) {
  CameraIntrinsics intr;
  try {
    intr.focal_x = j.at("fx").get<double>();
    intr.focal_y = j.at("fy").get<double>();
    intr.principal_x = j.at("cx").get<double>();
    intr.principal_y = j.at("cy").get<double>();
    const auto& k = j.at("k");
    GASTRO_CHECK(k.is_array() && k.size() == 4, ErrorKind::kIo, "intrinsics k needs 4 entries");
    for (int i = 0; i < 4; ++i) intr.k[i] = k[i].get<double>();
    intr.width = j.at("width").get<int>();
    intr.height = j.at("height").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, std::string("malformed intrinsics: ") + e.what());
  }
  intr.Validate();
  return intr;
}

json PoseToJson(const Quat& q, const Vec3& t) {
  return {{"quaternion", {q.w(), q.x(), q.y(), q.z()}}, {"translation", {t.x(), t.y(), t.z()}}};
}

void PoseFromJson(const json& j, Quat* q, Vec3* t) {
  const auto& qa = j.at("quaternion");
  const auto& ta = j.at("translation");
  GASTRO_CHECK(qa.size() == 4 && ta.size() == 3, ErrorKind::kIo, "malformed pose entry");
  *q = Quat(qa[0].get<double>(), qa[1].get<double>(), qa[2].get<double>(), qa[3].get<double>());
  GASTRO_CHECK(q->norm() > 0.0, ErrorKind::kIo, "zero quaternion");
  *t = Vec3(ta[0].get<double>(), ta[1].get<double>(), ta[2].get<double>());
}

template <typename T>
void Put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T Get() {
    GASTRO_CHECK(pos_ + sizeof(T) <= bytes_.size(), ErrorKind::kIo, "truncated track file");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string GetString(std::size_t n) {
    GASTRO_CHECK(pos_ + n <= bytes_.size(), ErrorKind::kIo, "truncated track file");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool AtEnd() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

constexpr char kTrackMagic[4] = {'G', 'T', 'R', 'K'};
constexpr std::uint32_t kTrackVersion = 1;

}  // namespace

void WriteIntrinsicsJson(const std::filesystem::path& path, const CameraIntrinsics& intr) {
  WriteJson(path, IntrinsicsToJson(intr));
}

CameraIntrinsics ReadIntrinsicsJson(const std::filesystem::path& path) {
  return IntrinsicsFromJson(ReadJson(path));
}

CamerasManifest MakeCamerasManifest(const Reconstruction& recon,
                                    const std::vector<std::string>& image_names) {
  const auto& names = image_names.empty() ? recon.image_names : image_names;
  CamerasManifest m;
  m.input_images = recon.NumImages();
  m.intrinsics = recon.intrinsics;
  for (const auto& [id, pose] : recon.frames) {
    CameraEntry e;
    e.id = id;
    e.frame_index = static_cast<std::size_t>(id) < recon.frame_indices.size()
                        ? recon.frame_indices[id]
                        : id;
    e.quaternion = pose.Quaternion();
    e.translation = pose.translation;
    if (static_cast<std::size_t>(id) < names.size()) e.image = names[id];
    m.frames.push_back(e);
  }
  return m;
}

void WriteCamerasJson(const std::filesystem::path& path, const CamerasManifest& manifest) {
  json frames = json::array();
  for (const auto& e : manifest.frames) {
    json f = PoseToJson(e.quaternion, e.translation);
    f["id"] = e.id;
    f["frame_index"] = e.frame_index;
    f["image"] = e.image;
    frames.push_back(f);
  }
  WriteJson(path, {{"input_images", manifest.input_images},
                   {"intrinsics", IntrinsicsToJson(manifest.intrinsics)},
                   {"frames", frames}});
}

CamerasManifest ReadCamerasJson(const std::filesystem::path& path) {
  const json j = ReadJson(path);
  CamerasManifest m;
  try {
    m.input_images = j.at("input_images").get<std::size_t>();
    m.intrinsics = IntrinsicsFromJson(j.at("intrinsics"));
    for (const auto& f : j.at("frames")) {
      CameraEntry e;
      e.id = f.at("id").get<int>();
      e.frame_index = f.at("frame_index").get<int>();
      e.image = f.at("image").get<std::string>();
      PoseFromJson(f, &e.quaternion, &e.translation);
      m.frames.push_back(e);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, path.string() + ": " + e.what());
  }
  return m;
}

ReconstructionStats StatsFromManifest(const CamerasManifest& manifest) {
  ReconstructionStats s;
  s.input_images = manifest.input_images;
  s.reconstructed_images = manifest.frames.size();
  s.reconstructed_pct = RoundedPercent(s.reconstructed_images, s.input_images);
  return s;
}

void WritePosesJson(const std::filesystem::path& path, const std::vector<RigidPose>& poses) {
  json frames = json::array();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    json f = PoseToJson(poses[i].Quaternion(), poses[i].translation);
    f["frame_index"] = i;
    frames.push_back(f);
  }
  WriteJson(path, {{"frames", frames}});
}

std::vector<RigidPose> ReadPosesJson(const std::filesystem::path& path) {
  const json j = ReadJson(path);
  std::vector<RigidPose> poses;
  try {
    for (const auto& f : j.at("frames")) {
      Quat q;
      Vec3 t;
      PoseFromJson(f, &q, &t);
      poses.push_back(RigidPose::FromQuaternion(q, t));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, path.string() + ": " + e.what());
  }
  return poses;
}

void WriteTracksBinary(const std::filesystem::path& path, const Reconstruction& recon) {
  std::string out(kTrackMagic, 4);
  Put<std::uint32_t>(out, kTrackVersion);
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(recon.NumImages()));
  for (std::size_t i = 0; i < recon.NumImages(); ++i) {
    Put<std::int32_t>(out, i < recon.frame_indices.size() ? recon.frame_indices[i]
                                                          : static_cast<std::int32_t>(i));
    const std::string name = i < recon.image_names.size() ? recon.image_names[i] : "";
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(recon.keypoints[i].size()));
    for (const auto& kp : recon.keypoints[i]) {
      Put(out, kp.x());
      Put(out, kp.y());
    }
  }
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(recon.tracks.size()));
  for (const auto& t : recon.tracks) {
    Put<std::uint8_t>(out, t.point3d ? 1 : 0);
    const Vec3 p = t.point3d.value_or(Vec3::Zero());
    for (int a = 0; a < 3; ++a) Put(out, p[a]);
    Put<std::uint8_t>(out, t.color ? 1 : 0);
    const Rgb c = t.color.value_or(Rgb{0, 0, 0});
    for (int a = 0; a < 3; ++a) Put(out, c[a]);
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(t.observations.size()));
    for (const auto& o : t.observations) {
      Put<std::int32_t>(out, o.image);
      Put<std::int32_t>(out, o.keypoint);
    }
  }
  Put<std::int32_t>(out, recon.init_first);
  Put<std::int32_t>(out, recon.init_second);
  Put<std::int32_t>(out, recon.gauge_axis);
  std::ofstream f(path, std::ios::binary);
  GASTRO_CHECK(f.good(), ErrorKind::kIo, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  GASTRO_CHECK(f.good(), ErrorKind::kIo, "failed writing " + path.string());
}

namespace {

void ReadTracksBinary(const std::filesystem::path& path, Reconstruction& recon) {
  std::ifstream f(path, std::ios::binary);
  GASTRO_CHECK(f.good(), ErrorKind::kIo, "cannot read " + path.string());
  ByteReader r(std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()));
  GASTRO_CHECK(r.GetString(4) == std::string(kTrackMagic, 4) &&
                   r.Get<std::uint32_t>() == kTrackVersion,
               ErrorKind::kIo, path.string() + " is not a track file");
  const auto num_images = r.Get<std::uint32_t>();
  recon.frame_indices.resize(num_images);
  recon.image_names.resize(num_images);
  recon.keypoints.resize(num_images);
  recon.keypoint_track.resize(num_images);
  for (std::uint32_t i = 0; i < num_images; ++i) {
    recon.frame_indices[i] = r.Get<std::int32_t>();
    recon.image_names[i] = r.GetString(r.Get<std::uint32_t>());
    const auto n = r.Get<std::uint32_t>();
    recon.keypoints[i].resize(n);
    for (auto& kp : recon.keypoints[i]) {
      kp.x() = r.Get<double>();
      kp.y() = r.Get<double>();
    }
    recon.keypoint_track[i].assign(n, -1);
  }
  const auto num_tracks = r.Get<std::uint32_t>();
  recon.tracks.resize(num_tracks);
  for (std::uint32_t t = 0; t < num_tracks; ++t) {
    Track& track = recon.tracks[t];
    const bool has_point = r.Get<std::uint8_t>() != 0;
    Vec3 p;
    for (int a = 0; a < 3; ++a) p[a] = r.Get<double>();
    if (has_point) track.point3d = p;
    const bool has_color = r.Get<std::uint8_t>() != 0;
    Rgb c;
    for (int a = 0; a < 3; ++a) c[a] = r.Get<std::uint8_t>();
    if (has_color) track.color = c;
    const auto n = r.Get<std::uint32_t>();
    track.observations.resize(n);
    for (auto& o : track.observations) {
      o.image = r.Get<std::int32_t>();
      o.keypoint = r.Get<std::int32_t>();
      GASTRO_CHECK(o.image >= 0 && static_cast<std::uint32_t>(o.image) < num_images &&
                       o.keypoint >= 0 &&
                       static_cast<std::size_t>(o.keypoint) < recon.keypoints[o.image].size(),
                   ErrorKind::kIo, "track observation out of range in " + path.string());
      recon.keypoint_track[o.image][o.keypoint] = static_cast<int>(t);
    }
  }
  recon.init_first = r.Get<std::int32_t>();
  recon.init_second = r.Get<std::int32_t>();
  recon.gauge_axis = r.Get<std::int32_t>();
  GASTRO_CHECK(r.AtEnd(), ErrorKind::kIo, "trailing bytes in " + path.string());
}

}  // namespace

void SaveReconstruction(const std::filesystem::path& dir, const Reconstruction& recon) {
  std::filesystem::create_directories(dir);
  WriteCamerasJson(dir / "cameras.json", MakeCamerasManifest(recon, {}));
  WriteTracksBinary(dir / "tracks.bin", recon);
  WritePointCloudPly(dir / "sparse.ply", CloudFromReconstruction(recon));
}

Reconstruction LoadReconstruction(const std::filesystem::path& dir) {
  const CamerasManifest m = ReadCamerasJson(dir / "cameras.json");
  Reconstruction recon;
  recon.intrinsics = m.intrinsics;
  ReadTracksBinary(dir / "tracks.bin", recon);
  GASTRO_CHECK(recon.NumImages() == m.input_images, ErrorKind::kIo,
               "cameras.json and tracks.bin disagree on the image count");
  for (const auto& e : m.frames) {
    GASTRO_CHECK(e.id >= 0 && static_cast<std::size_t>(e.id) < recon.NumImages(), ErrorKind::kIo,
                 "camera id out of range: " + std::to_string(e.id));
    recon.frames[e.id] = e.Pose();
  }
  return recon;
}

}  // namespace gastro
