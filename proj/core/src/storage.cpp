// Copyright 2026 The PerceptionLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "perceptionlab/storage.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

namespace perceptionlab::storage {
namespace {

namespace fs = std::filesystem;

[[noreturn]] void fail_io(const std::string& what) {
  throw Error(ErrorCode::kStorageError, what + ": " + std::strerror(errno));
}

// Canonicalizes by parsing into the domain type and re-encoding.
Json canonicalize(Collection c, const Json& doc) {
  switch (c) {
    case Collection::kCampaigns: return Json(validate_campaign(doc).campaign);
    case Collection::kFragments: return Json(validate_fragment(doc));
    case Collection::kParticipants: return Json(validate_participant(doc));
    case Collection::kSessions: return Json(validate_session(doc));
    case Collection::kJudgments: return Json(parse_judgment(doc));
    case Collection::kPresentations: return Json(parse_presentation(doc));
  }
  throw Error(ErrorCode::kSchemaViolation, "unknown collection");
}

bool matches(const Json& doc, const Predicate& p) {
  auto it = doc.find(p.field);
  if (it == doc.end()) return false;
  const Json& v = *it;
  // Numbers compare numerically regardless of integer/float encoding.
  if (v.is_number() && p.value.is_number()) {
    const double a = v.get<double>();
    const double b = p.value.get<double>();
    switch (p.op) {
      case Predicate::Op::kEq: return a == b;
      case Predicate::Op::kLt: return a < b;
      case Predicate::Op::kLe: return a <= b;
      case Predicate::Op::kGt: return a > b;
      case Predicate::Op::kGe: return a >= b;
    }
  }
  if (v.type() != p.value.type()) return false;
  switch (p.op) {
    case Predicate::Op::kEq: return v == p.value;
    case Predicate::Op::kLt: return v < p.value;
    case Predicate::Op::kLe: return v <= p.value;
    case Predicate::Op::kGt: return v > p.value;
    case Predicate::Op::kGe: return v >= p.value;
  }
  return false;
}

}  // namespace

std::string_view to_string(Collection c) {
  switch (c) {
    case Collection::kCampaigns: return "campaigns";
    case Collection::kFragments: return "fragments";
    case Collection::kParticipants: return "participants";
    case Collection::kSessions: return "sessions";
    case Collection::kJudgments: return "judgments";
    case Collection::kPresentations: return "presentations";
  }
  return "";
}

std::optional<Collection> parse_collection(std::string_view name) {
  for (Collection c : kAllCollections) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

const std::vector<std::string>& field_names(Collection c) {
  static const std::vector<std::string> kCampaign = {
      "campaign_id", "name",       "models", "temperatures",       "styles",     "formats",         "languages",
      "veracity_targets", "replicates_per_cell", "topics", "prompt_template_id", "seed", "created_at", "prompt_template"};
  static const std::vector<std::string> kFragment = {
      "fragment_id", "campaign_id", "source", "model", "model_version", "temperature", "style", "format", "language",
      "veracity_label", "prompt_system", "prompt_user", "generation_params", "text", "content_hash", "created_at"};
  static const std::vector<std::string> kParticipant = {"participant_id", "age_band", "education",
                                                        "political_orientation", "country", "ui_language",
                                                        "consent", "created_at"};
  static const std::vector<std::string> kSession = {"session_id",          "participant_id",   "campaign_id",
                                                    "arm",                 "served_fragment_ids", "next_trial_index",
                                                    "started_at",          "completed_at"};
  static const std::vector<std::string> kJudgment = {
      "judgment_id",       "fragment_id",       "session_id",        "participant_id", "origin_score",
      "veracity_score",    "familiarity_score", "latency_ms_client", "latency_ms_server", "trial_index",
      "arm",               "created_at"};
  static const std::vector<std::string> kPresentation = {"session_id", "trial_index",   "fragment_id",
                                                         "text",       "presented_at",  "prebunk_shown",
                                                         "prebunk_text"};
  switch (c) {
    case Collection::kCampaigns: return kCampaign;
    case Collection::kFragments: return kFragment;
    case Collection::kParticipants: return kParticipant;
    case Collection::kSessions: return kSession;
    case Collection::kJudgments: return kJudgment;
    case Collection::kPresentations: return kPresentation;
  }
  return kCampaign;
}

std::string presentation_key(const Uuid& session_id, int trial_index) {
  return session_id.to_string() + "#" + std::to_string(trial_index);
}

Predicate eq(std::string field, Json value) { return {std::move(field), Predicate::Op::kEq, std::move(value)}; }
Predicate ge(std::string field, Json value) { return {std::move(field), Predicate::Op::kGe, std::move(value)}; }
Predicate lt(std::string field, Json value) { return {std::move(field), Predicate::Op::kLt, std::move(value)}; }

std::string document_id(Collection c, const Json& doc) {
  auto field = [&](const char* name) -> std::string {
    auto it = doc.find(name);
    if (it == doc.end() || !it->is_string()) {
      throw Error(ErrorCode::kSchemaViolation, std::string(to_string(c)) + " document lacks " + name);
    }
    return it->get<std::string>();
  };
  switch (c) {
    case Collection::kCampaigns: return field("campaign_id");
    case Collection::kFragments: return field("fragment_id");
    case Collection::kParticipants: return field("participant_id");
    case Collection::kSessions: return field("session_id");
    case Collection::kJudgments: return field("judgment_id");
    case Collection::kPresentations: {
      auto sid = Uuid::parse(field("session_id"));
      auto it = doc.find("trial_index");
      if (!sid || it == doc.end() || !it->is_number_integer()) {
        throw Error(ErrorCode::kSchemaViolation, "presentation document lacks session_id/trial_index");
      }
      return presentation_key(*sid, it->get<int>());
    }
  }
  throw Error(ErrorCode::kSchemaViolation, "unknown collection");
}

std::vector<Json> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kStorageError, "cannot open " + path.string());
  std::vector<Json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::kSchemaViolation, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

JsonlStore::JsonlStore(fs::path root) : JsonlStore(std::move(root), Options{}) {}

JsonlStore::JsonlStore(fs::path root, Options options) : root_(std::move(root)), options_(options) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error(ErrorCode::kStorageError, "cannot create " + root_.string() + ": " + ec.message());
  for (std::size_t i = 0; i < tables_.size(); ++i) tables_[i] = std::make_unique<Table>();
  for (Collection c : kAllCollections) load(c);
}

JsonlStore::~JsonlStore() {
  for (auto& t : tables_) {
    if (t && t->fd >= 0) ::close(t->fd);
  }
}

fs::path JsonlStore::file_path(Collection c) const { return root_ / (std::string(to_string(c)) + ".jsonl"); }

void JsonlStore::load(Collection c) {
  Table& t = table(c);
  const fs::path path = file_path(c);
  t.fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (t.fd < 0) fail_io("open " + path.string());

  std::string content;
  {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    content = ss.str();
  }
  const std::size_t last_lf = content.rfind('\n');
  const std::size_t keep = last_lf == std::string::npos ? 0 : last_lf + 1;
  if (keep < content.size()) {
    torn_bytes_ += content.size() - keep;
    if (::ftruncate(t.fd, static_cast<off_t>(keep)) != 0) fail_io("truncate " + path.string());
    if (::fsync(t.fd) != 0) fail_io("fsync " + path.string());
    content.resize(keep);
  }

  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    const std::size_t end = content.find('\n', pos);
    std::string_view line(content.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    Json doc;
    try {
      doc = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::kStorageError,
                  path.string() + ":" + std::to_string(line_no) + " is corrupt: " + e.what());
    }
    std::string id = document_id(c, doc);
    if (!t.index.emplace(id, t.docs.size()).second) {
      throw Error(ErrorCode::kStorageError, path.string() + ": duplicate id " + id);
    }
    t.docs.push_back(std::move(doc));
  }
}

std::string JsonlStore::prepare(Collection c, const Json& document, Json& canonical_doc) const {
  try {
    canonical_doc = canonicalize(c, document);
  } catch (const Error& e) {
    throw Error(ErrorCode::kSchemaViolation, e.what(), e.violations());
  }
  std::string id = document_id(c, canonical_doc);
  if (table(c).index.count(id)) {
    throw Error(ErrorCode::kDuplicateId, std::string(to_string(c)) + " already holds id " + id);
  }
  if (c == Collection::kJudgments) {
    const std::string fragment = canonical_doc.at("fragment_id").get<std::string>();
    const std::string session = canonical_doc.at("session_id").get<std::string>();
    if (!contains(Collection::kFragments, fragment)) {
      throw Error(ErrorCode::kReferentialViolation, "judgment references unknown fragment " + fragment);
    }
    if (!contains(Collection::kSessions, session)) {
      throw Error(ErrorCode::kReferentialViolation, "judgment references unknown session " + session);
    }
  }
  return id;
}

void JsonlStore::append_line(Table& t, const std::string& line) {
  // One write per record: a crash leaves either the whole line or a prefix
  // without its LF, which load() discards.
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    const ssize_t n = ::write(t.fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail_io("append");
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

void JsonlStore::sync(Table& t) {
  if (options_.fsync_on_insert && ::fdatasync(t.fd) != 0) fail_io("fdatasync");
}

std::string JsonlStore::insert(Collection c, const Json& document) {
  Table& t = table(c);
  std::unique_lock lock(t.mu);
  Json doc;
  std::string id = prepare(c, document, doc);
  append_line(t, doc.dump() + "\n");
  sync(t);
  t.index.emplace(id, t.docs.size());
  t.docs.push_back(std::move(doc));
  return id;
}

std::vector<std::string> JsonlStore::insert_many(Collection c, const std::vector<Json>& documents) {
  Table& t = table(c);
  std::unique_lock lock(t.mu);
  std::vector<std::string> ids;
  ids.reserve(documents.size());
  bool dirty = false;
  try {
    for (const Json& document : documents) {
      Json doc;
      std::string id = prepare(c, document, doc);
      append_line(t, doc.dump() + "\n");
      dirty = true;
      t.index.emplace(id, t.docs.size());
      t.docs.push_back(std::move(doc));
      ids.push_back(std::move(id));
    }
  } catch (...) {
    if (dirty) sync(t);
    throw;
  }
  if (dirty) sync(t);
  return ids;
}

std::optional<Json> JsonlStore::get(Collection c, std::string_view id) const {
  Table& t = table(c);
  std::shared_lock lock(t.mu);
  auto it = t.index.find(std::string(id));
  if (it == t.index.end()) return std::nullopt;
  return t.docs[it->second];
}

bool JsonlStore::contains(Collection c, std::string_view id) const {
  Table& t = table(c);
  std::shared_lock lock(t.mu);
  return t.index.count(std::string(id)) > 0;
}

std::vector<Json> JsonlStore::query(Collection c, const Filter& filter) const {
  const auto& names = field_names(c);
  for (const auto& p : filter) {
    if (std::find(names.begin(), names.end(), p.field) == names.end()) {
      throw Error(ErrorCode::kUnknownField, std::string(to_string(c)) + " has no field " + p.field);
    }
  }
  Table& t = table(c);
  std::shared_lock lock(t.mu);
  std::vector<Json> out;
  for (const Json& doc : t.docs) {
    bool ok = true;
    for (const auto& p : filter) {
      if (!matches(doc, p)) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(doc);
  }
  return out;
}

std::size_t JsonlStore::size(Collection c) const {
  Table& t = table(c);
  std::shared_lock lock(t.mu);
  return t.docs.size();
}

}  // namespace perceptionlab::storage
