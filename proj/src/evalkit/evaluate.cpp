#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "fdlite/errors.hpp"
#include "fdlite/evalkit.hpp"

namespace fdlite::evalkit {

using anchorkit::Box;

std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy:
      return "easy";
    case Difficulty::Medium:
      return "medium";
    case Difficulty::Hard:
      return "hard";
  }
  return "?";
}

std::optional<Difficulty> difficulty_from_string(const std::string& s) {
  if (s == "easy") return Difficulty::Easy;
  if (s == "medium") return Difficulty::Medium;
  if (s == "hard") return Difficulty::Hard;
  return std::nullopt;
}

std::size_t AnnotationSet::face_count() const {
  std::size_t n = 0;
  for (const auto& im : images) n += im.faces.size();
  return n;
}

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

bool parse_number(const std::string& tok, double& out) {
  std::size_t used = 0;
  try {
    out = std::stod(tok, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == tok.size() && std::isfinite(out);
}

std::string stem_of(const std::string& name) { return std::filesystem::path(name).stem().string(); }

}  // namespace

AnnotationSet parse_gt(const std::string& text, const std::string& source) {
  std::vector<std::string> lines;
  {
    std::istringstream is(text);
    for (std::string l; std::getline(is, l);) lines.push_back(trim(l));
  }
  auto fail = [&](std::size_t idx, const std::string& msg) -> FormatError {
    return FormatError(source + ":" + std::to_string(idx + 1) + ": " + msg);
  };
  AnnotationSet set;
  std::size_t i = 0;
  auto skip_blank = [&] {
    while (i < lines.size() && lines[i].empty()) ++i;
  };
  for (skip_blank(); i < lines.size(); skip_blank()) {
    ImageAnnotation im;
    im.image = lines[i++];
    skip_blank();
    if (i >= lines.size()) throw fail(i - 1, "missing face count for '" + im.image + "'");
    double count_d = 0.0;
    if (!parse_number(lines[i], count_d) || count_d < 0 || count_d != static_cast<long>(count_d)) {
      throw fail(i, "expected a face count, got '" + lines[i] + "'");
    }
    const auto count = static_cast<std::size_t>(count_d);
    ++i;
    if (count == 0) {
      // placeholder row of zeros in the public layout; optional here
      if (i < lines.size()) {
        const auto toks = split_ws(lines[i]);
        double v;
        if (toks.size() >= 4 && std::all_of(toks.begin(), toks.end(),
                                             [&](const std::string& t) { return parse_number(t, v); })) {
          ++i;
        }
      }
    }
    for (std::size_t k = 0; k < count; ++k, ++i) {
      if (i >= lines.size()) throw fail(lines.size() - 1, "expected " + std::to_string(count) + " faces for '" + im.image + "'");
      const auto toks = split_ws(lines[i]);
      if (toks.size() < 4) throw fail(i, "face line needs at least 'x y w h'");
      double v[4];
      for (int c = 0; c < 4; ++c) {
        if (!parse_number(toks[static_cast<std::size_t>(c)], v[c])) {
          throw fail(i, "non-numeric box value '" + toks[static_cast<std::size_t>(c)] + "'");
        }
      }
      if (!(v[2] > 0.0) || !(v[3] > 0.0)) throw fail(i, "box width and height must be positive");
      GtFace f;
      f.box = {v[0], v[1], v[2], v[3]};
      for (std::size_t c = 4; c < toks.size(); ++c) {
        double dummy;
        if (parse_number(toks[c], dummy)) continue;
        if (auto d = difficulty_from_string(toks[c])) {
          f.difficulty = d;
        } else if (toks[c] == "ignore") {
          f.ignore = true;
        } else {
          throw fail(i, "unknown face tag '" + toks[c] + "'");
        }
      }
      im.faces.push_back(f);
    }
    set.images.push_back(std::move(im));
  }
  return set;
}

AnnotationSet load_gt(const std::filesystem::path& path) { return parse_gt(read_text(path), path.string()); }

std::vector<ImageDetections> parse_detections(const std::string& text, const std::string& source) {
  std::vector<ImageDetections> out;
  std::map<std::string, std::size_t> index;
  std::istringstream is(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto image = j.at("image").get<std::string>();
      ScoredBox d{{j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(),
                   j.at("h").get<double>()},
                  j.at("score").get<double>()};
      auto [it, inserted] = index.try_emplace(image, out.size());
      if (inserted) out.push_back({image, {}});
      out[it->second].dets.push_back(d);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ImageDetections> load_detections(const std::filesystem::path& path) {
  return parse_detections(read_text(path), path.string());
}

MatchResult match_dets(const std::vector<Box>& dets, const std::vector<EvalGt>& gts, double iou_thresh) {
  MatchResult r;
  r.outcome.assign(dets.size(), DetOutcome::FalsePositive);
  r.gt_matched.assign(gts.size(), false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    int best = -1;
    double best_iou = iou_thresh;
    int best_ignored = -1;
    double best_ignored_iou = iou_thresh;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double o = anchorkit::iou(dets[d], gts[g].box);
      if (gts[g].ignore) {
        if (o >= best_ignored_iou && (best_ignored < 0 || o > best_ignored_iou)) {
          best_ignored = static_cast<int>(g);
          best_ignored_iou = o;
        }
      } else if (!r.gt_matched[g] && o >= best_iou && (best < 0 || o > best_iou)) {
        best = static_cast<int>(g);
        best_iou = o;
      }
    }
    if (best >= 0) {
      r.outcome[d] = DetOutcome::TruePositive;
      r.gt_matched[static_cast<std::size_t>(best)] = true;
    } else if (best_ignored >= 0) {
      r.outcome[d] = DetOutcome::Ignored;
    }
  }
  return r;
}

PRCurve average_precision(std::vector<ScoredOutcome> stream, std::size_t n_gt) {
  if (n_gt == 0) throw DataError("average precision is undefined without ground truth");
  std::stable_sort(stream.begin(), stream.end(),
                   [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score > b.score; });
  PRCurve curve;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < stream.size();) {
    std::size_t j = i;
    for (; j < stream.size() && stream[j].score == stream[i].score; ++j) {
      (stream[j].true_positive ? tp : fp)++;
    }
    curve.points.push_back({static_cast<double>(tp) / static_cast<double>(n_gt),
                            static_cast<double>(tp) / static_cast<double>(tp + fp)});
    i = j;
  }
  double envelope = 0.0, area = 0.0;
  for (std::size_t k = curve.points.size(); k-- > 0;) {
    envelope = std::max(envelope, curve.points[k].precision);
    const double prev_recall = k ? curve.points[k - 1].recall : 0.0;
    area += (curve.points[k].recall - prev_recall) * envelope;
  }
  curve.ap = area;
  return curve;
}

TprResult tpr_at_fp(const std::vector<ScoredOutcome>& stream, std::size_t n_gt, std::size_t fp_budget) {
  if (n_gt == 0) throw DataError("TPR is undefined without ground truth");
  TprResult r;
  r.under_budget = true;
  for (const auto& s : stream) {
    if (s.true_positive) {
      ++r.true_positives;
    } else if (r.false_positives == fp_budget) {
      r.under_budget = false;
      break;
    } else {
      ++r.false_positives;
    }
  }
  r.tpr = static_cast<double>(r.true_positives) / static_cast<double>(n_gt);
  return r;
}

std::vector<ScoredOutcome> pooled_outcomes(const std::vector<ImageDetections>& dets,
                                           const AnnotationSet& gts, const std::string& subset,
                                           std::size_t* n_gt, double iou_thresh) {
  std::optional<Difficulty> want;
  if (subset != "all") {
    want = difficulty_from_string(subset);
    if (!want) throw ConfigError("unknown subset '" + subset + "' (all, easy, medium, hard)");
  }
  std::map<std::string, const ImageDetections*> by_name, by_stem;
  for (const auto& d : dets) {
    by_name.emplace(d.image, &d);
    by_stem.emplace(stem_of(d.image), &d);
  }
  std::vector<ScoredOutcome> stream;
  std::size_t counted = 0;
  for (const auto& im : gts.images) {
    std::vector<EvalGt> eg;
    for (const auto& f : im.faces) {
      const bool counts = !f.ignore && (!want || f.difficulty == want);
      eg.push_back({f.box, !counts});
      counted += counts;
    }
    const ImageDetections* found = nullptr;
    if (auto it = by_name.find(im.image); it != by_name.end()) {
      found = it->second;
    } else if (auto st = by_stem.find(stem_of(im.image)); st != by_stem.end()) {
      found = st->second;
    }
    if (!found) continue;
    std::vector<ScoredBox> sorted = found->dets;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
    std::vector<Box> boxes;
    for (const auto& s : sorted) boxes.push_back(s.box);
    const auto m = match_dets(boxes, eg, iou_thresh);
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      if (m.outcome[k] == DetOutcome::Ignored) continue;
      stream.push_back({sorted[k].score, m.outcome[k] == DetOutcome::TruePositive});
    }
  }
  std::stable_sort(stream.begin(), stream.end(),
                   [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score > b.score; });
  if (n_gt) *n_gt = counted;
  return stream;
}

SubsetResult evaluate_ap(const std::vector<ImageDetections>& dets, const AnnotationSet& gts,
                         const std::string& subset, double iou_thresh) {
  SubsetResult r;
  r.subset = subset;
  const auto stream = pooled_outcomes(dets, gts, subset, &r.n_gt, iou_thresh);
  r.n_images = gts.images.size();
  if (r.n_gt == 0) throw DataError("subset '" + subset + "' has no ground-truth faces");
  r.curve = average_precision(stream, r.n_gt);
  return r;
}

std::vector<SubsetResult> evaluate_all_subsets(const std::vector<ImageDetections>& dets,
                                               const AnnotationSet& gts, double iou_thresh) {
  std::vector<SubsetResult> out{evaluate_ap(dets, gts, "all", iou_thresh)};
  for (auto d : {Difficulty::Easy, Difficulty::Medium, Difficulty::Hard}) {
    bool any = false;
    for (const auto& im : gts.images) {
      for (const auto& f : im.faces) any |= !f.ignore && f.difficulty == d;
    }
    if (any) out.push_back(evaluate_ap(dets, gts, to_string(d), iou_thresh));
  }
  return out;
}

nlohmann::json to_json(const SubsetResult& r) {
  return {{"subset", r.subset}, {"ap", r.curve.ap}, {"n_images", r.n_images}, {"n_gt", r.n_gt}};
}

nlohmann::json tpr_to_json(const TprResult& r, std::size_t fp_budget, std::size_t n_gt,
                           std::size_t n_images) {
  return {{"protocol", "fddb"},
          {"fp_budget", fp_budget},
          {"tpr", r.tpr},
          {"true_positives", r.true_positives},
          {"false_positives", r.false_positives},
          {"under_budget", r.under_budget},
          {"n_gt", n_gt},
          {"n_images", n_images}};
}

}  // namespace fdlite::evalkit
