#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "eyeadapt/datakit.hpp"
#include "eyeadapt/errors.hpp"

namespace eyeadapt {

namespace fs = std::filesystem;
using nlohmann::json;

std::string manifest_to_json(const DatasetManifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back({{"id", e.id}, {"image", e.image}, {"mask", e.mask}, {"split", e.split}});
  }
  json doc = {{"version", manifest.version},
              {"domain", std::string(to_string(manifest.domain))},
              {"entries", entries},
              {"provenance", manifest.provenance}};
  return doc.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("", std::string("manifest is not valid JSON: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.version = doc.at("version").get<int>();
    if (m.version != 1) throw FormatError("", "unsupported manifest version " + std::to_string(m.version));
    m.domain = parse_domain(doc.at("domain").get<std::string>());
    std::set<std::string> seen;
    for (const auto& e : doc.at("entries")) {
      ManifestEntry entry;
      entry.id = e.at("id").get<std::string>();
      entry.image = e.at("image").get<std::string>();
      entry.mask = e.at("mask").get<std::string>();
      entry.split = e.value("split", "train");
      if (!seen.insert(entry.id).second) throw FormatError(entry.id, "duplicate id in manifest");
      m.entries.push_back(std::move(entry));
    }
    if (doc.contains("provenance")) {
      m.provenance = doc.at("provenance").get<std::map<std::string, std::string>>();
    }
  } catch (const json::exception& e) {
    throw FormatError("", std::string("manifest schema error: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError("", e.what());
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << manifest_to_json(manifest);
  if (!out) throw DataError("failed writing manifest " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read manifest " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return manifest_from_json(buf.str());
}

void save_sample(const ImageSample& sample, const fs::path& image_path, const fs::path& mask_path) {
  validate(sample);
  const int h = sample.image.height;
  const int w = sample.image.width;
  cv::Mat img(h, w, CV_8UC1);
  cv::Mat msk(h, w, CV_8UC1);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      img.at<std::uint8_t>(r, c) = static_cast<std::uint8_t>(std::lround(sample.image.at(r, c) * 255.0f));
      msk.at<std::uint8_t>(r, c) = sample.mask.at(r, c);
    }
  }
  for (const auto* p : {&image_path, &mask_path}) {
    if (p->has_parent_path()) fs::create_directories(p->parent_path());
  }
  if (!cv::imwrite(image_path.string(), img)) throw DataError("cannot write " + image_path.string());
  if (!cv::imwrite(mask_path.string(), msk)) throw DataError("cannot write " + mask_path.string());
}

ImageSample load_sample(const std::string& id, const fs::path& image_path, const fs::path& mask_path,
                        Domain domain) {
  if (!fs::exists(image_path)) throw FormatError(id, "missing image file " + image_path.string());
  if (!fs::exists(mask_path)) throw FormatError(id, "missing mask file " + mask_path.string());
  const cv::Mat img = cv::imread(image_path.string(), cv::IMREAD_UNCHANGED);
  const cv::Mat msk = cv::imread(mask_path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty() || img.type() != CV_8UC1) throw FormatError(id, "image is not an 8-bit grayscale PNG");
  if (msk.empty() || msk.type() != CV_8UC1) throw FormatError(id, "mask is not an 8-bit single-channel PNG");
  if (img.size() != msk.size()) throw FormatError(id, "image and mask dimensions differ");

  ImageSample s;
  s.id = id;
  s.domain = domain;
  s.image = Image(img.rows, img.cols);
  s.mask = Mask(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      s.image.at(r, c) = img.at<std::uint8_t>(r, c) / 255.0f;
      s.mask.at(r, c) = msk.at<std::uint8_t>(r, c);
    }
  }
  validate(s);
  return s;
}

void save_dataset(const Dataset& ds, const fs::path& root) {
  if (ds.samples.size() != ds.manifest.entries.size()) {
    throw DataError("dataset samples and manifest entries disagree in count");
  }
  fs::create_directories(root);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& e = ds.manifest.entries[i];
    save_sample(ds.samples[i], root / e.image, root / e.mask);
  }
  save_manifest(ds.manifest, root / "manifest.json");
}

Dataset load_dataset(const fs::path& root) {
  Dataset ds;
  ds.manifest = load_manifest(root / "manifest.json");
  ds.samples.reserve(ds.manifest.entries.size());
  for (const auto& e : ds.manifest.entries) {
    ds.samples.push_back(load_sample(e.id, root / e.image, root / e.mask, ds.manifest.domain));
  }
  return ds;
}

}  // namespace eyeadapt
