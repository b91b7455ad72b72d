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

#include "perceptionlab/domain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <utility>

#include "perceptionlab/hash.hpp"

namespace perceptionlab {
namespace {

// Collects field-level violations while reading a JSON object.
class Reader {
 public:
  Reader(const Json& doc, std::string_view type_name) : doc_(doc), type_(type_name) {
    if (!doc_.is_object()) add(ErrorCode::kSchemaViolation, "", "document must be a JSON object");
  }

  bool ok() const { return violations_.empty(); }

  void add(ErrorCode code, std::string field, std::string message) {
    violations_.push_back({code, std::move(field), std::move(message)});
  }

  const Json* find(std::string_view field, bool required) {
    if (!doc_.is_object()) return nullptr;
    auto it = doc_.find(std::string(field));
    if (it == doc_.end() || it->is_null()) {
      if (required) add(ErrorCode::kMissingField, std::string(field), std::string(field) + " is required");
      return nullptr;
    }
    return &*it;
  }

  std::optional<std::string> string(std::string_view field, bool required = true, bool nonempty = true) {
    const Json* v = find(field, required);
    if (!v) return std::nullopt;
    if (!v->is_string()) {
      add(ErrorCode::kInvalidValue, std::string(field), std::string(field) + " must be a string");
      return std::nullopt;
    }
    std::string s = v->get<std::string>();
    if (nonempty && s.empty()) {
      add(ErrorCode::kInvalidValue, std::string(field), std::string(field) + " must be nonempty");
      return std::nullopt;
    }
    return s;
  }

  std::optional<std::int64_t> integer(std::string_view field, bool required = true) {
    const Json* v = find(field, required);
    if (!v) return std::nullopt;
    if (v->is_number_integer()) {
      if (v->is_number_unsigned() && v->get<std::uint64_t>() > std::numeric_limits<std::int64_t>::max()) {
        add(ErrorCode::kOutOfRange, std::string(field), std::string(field) + " is too large");
        return std::nullopt;
      }
      return v->get<std::int64_t>();
    }
    add(ErrorCode::kInvalidValue, std::string(field), std::string(field) + " must be an integer");
    return std::nullopt;
  }

  std::optional<std::uint64_t> unsigned64(std::string_view field, bool required = true) {
    const Json* v = find(field, required);
    if (!v) return std::nullopt;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v->get<std::int64_t>());
    add(ErrorCode::kInvalidValue, std::string(field), std::string(field) + " must be an unsigned 64-bit integer");
    return std::nullopt;
  }

  std::optional<double> number(std::string_view field, bool required = true) {
    const Json* v = find(field, required);
    if (!v) return std::nullopt;
    if (!v->is_number()) {
      add(ErrorCode::kInvalidValue, std::string(field), std::string(field) + " must be a number");
      return std::nullopt;
    }
    double d = v->get<double>();
    if (!std::isfinite(d)) {
      add(ErrorCode::kInvalidValue, std::string(field), std::string(field) + " must be finite");
      return std::nullopt;
    }
    return d;
  }

  std::optional<bool> boolean(std::string_view field, bool required = true) {
    const Json* v = find(field, required);
    if (!v) return std::nullopt;
    if (!v->is_boolean()) {
      add(ErrorCode::kInvalidValue, std::string(field), std::string(field) + " must be a boolean");
      return std::nullopt;
    }
    return v->get<bool>();
  }

  std::optional<Uuid> uuid(std::string_view field, bool required = true) {
    auto s = string(field, required);
    if (!s) return std::nullopt;
    auto id = Uuid::parse(*s);
    if (!id) add(ErrorCode::kInvalidValue, std::string(field), std::string(field) + " must be a UUID");
    return id;
  }

  std::optional<Timestamp> timestamp(std::string_view field, bool required = true) {
    auto s = string(field, required);
    if (!s) return std::nullopt;
    auto t = parse_rfc3339(*s);
    if (!t) add(ErrorCode::kInvalidValue, std::string(field), std::string(field) + " must be an RFC3339 timestamp");
    return t;
  }

  // A present array (possibly empty). Emptiness is checked by the caller.
  const Json* array(std::string_view field, bool required = true) {
    const Json* v = find(field, required);
    if (!v) return nullptr;
    if (!v->is_array()) {
      add(ErrorCode::kInvalidValue, std::string(field), std::string(field) + " must be an array");
      return nullptr;
    }
    return v;
  }

  std::optional<std::vector<std::string>> string_list(std::string_view field, bool required, bool nonempty) {
    const Json* arr = array(field, required);
    if (!arr) return std::nullopt;
    if (nonempty && arr->empty()) {
      add(ErrorCode::kEmptyList, std::string(field), std::string(field) + " must be nonempty");
      return std::nullopt;
    }
    std::vector<std::string> out;
    for (const auto& e : *arr) {
      if (!e.is_string() || e.get<std::string>().empty()) {
        add(ErrorCode::kInvalidValue, std::string(field), std::string(field) + " entries must be nonempty strings");
        return std::nullopt;
      }
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  void finish() const {
    if (violations_.empty()) return;
    std::ostringstream msg;
    msg << type_ << ": ";
    for (std::size_t i = 0; i < violations_.size(); ++i) {
      if (i) msg << "; ";
      msg << to_string(violations_[i].code);
      if (!violations_[i].field.empty()) msg << "(" << violations_[i].field << ")";
      msg << " " << violations_[i].message;
    }
    throw Error(violations_.front().code, msg.str(), violations_);
  }

 private:
  const Json& doc_;
  std::string type_;
  std::vector<Violation> violations_;
};

bool is_tag(std::string_view s) {
  if (s.empty() || s.size() > 64 || !(s[0] >= 'a' && s[0] <= 'z')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; });
}

bool is_alpha2(std::string_view s) {
  return s.size() == 2 && std::isupper(static_cast<unsigned char>(s[0])) && std::isupper(static_cast<unsigned char>(s[1]));
}

std::string format_bounds(double lo, double hi) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << "[" << lo << ", " << hi << "]";
  return os.str();
}

template <typename E, typename ParseFn>
std::optional<E> read_enum(Reader& r, std::string_view field, ParseFn parse, bool required = true,
                           ErrorCode code = ErrorCode::kInvalidValue) {
  auto s = r.string(field, required);
  if (!s) return std::nullopt;
  auto v = parse(*s);
  if (!v) r.add(code, std::string(field), std::string(field) + " has unknown value '" + *s + "'");
  return v;
}

void put_optional(Json& j, const char* key, const std::optional<std::string>& v) {
  if (v) j[key] = *v;
}

}  // namespace

// ---- enum names ----

std::string_view to_string(ProviderKind v) { return v == ProviderKind::kMock ? "mock" : "openai_compatible"; }
std::string_view to_string(Source v) { return v == Source::kGenerated ? "generated" : "human"; }
std::string_view to_string(Veracity v) { return v == Veracity::kFake ? "fake" : "real"; }
std::string_view to_string(Arm v) { return v == Arm::kInoculation ? "inoculation" : "control"; }

std::string_view to_string(AgeBand v) {
  switch (v) {
    case AgeBand::k18To24: return "18-24";
    case AgeBand::k25To34: return "25-34";
    case AgeBand::k35To44: return "35-44";
    case AgeBand::k45To54: return "45-54";
    case AgeBand::k55To64: return "55-64";
    case AgeBand::k65Plus: return "65+";
  }
  return "";
}

std::string_view to_string(Education v) {
  switch (v) {
    case Education::kSecondary: return "secondary";
    case Education::kBachelor: return "bachelor";
    case Education::kMaster: return "master";
    case Education::kDoctorate: return "doctorate";
    case Education::kOther: return "other";
  }
  return "";
}

std::optional<ProviderKind> parse_provider_kind(std::string_view s) {
  if (s == "openai_compatible") return ProviderKind::kOpenAICompatible;
  if (s == "mock") return ProviderKind::kMock;
  return std::nullopt;
}
std::optional<Source> parse_source(std::string_view s) {
  if (s == "generated") return Source::kGenerated;
  if (s == "human") return Source::kHuman;
  return std::nullopt;
}
std::optional<Veracity> parse_veracity(std::string_view s) {
  if (s == "real") return Veracity::kReal;
  if (s == "fake") return Veracity::kFake;
  return std::nullopt;
}
std::optional<Arm> parse_arm(std::string_view s) {
  if (s == "control") return Arm::kControl;
  if (s == "inoculation") return Arm::kInoculation;
  return std::nullopt;
}

std::optional<AgeBand> parse_age_band(std::string_view s) {
  std::string norm(s);
  const std::string en_dash = "\xE2\x80\x93";
  if (auto pos = norm.find(en_dash); pos != std::string::npos) norm.replace(pos, en_dash.size(), "-");
  for (AgeBand b : {AgeBand::k18To24, AgeBand::k25To34, AgeBand::k35To44, AgeBand::k45To54, AgeBand::k55To64,
                    AgeBand::k65Plus}) {
    if (norm == to_string(b)) return b;
  }
  return std::nullopt;
}

std::optional<Education> parse_education(std::string_view s) {
  for (Education e : {Education::kSecondary, Education::kBachelor, Education::kMaster, Education::kDoctorate,
                      Education::kOther}) {
    if (s == to_string(e)) return e;
  }
  return std::nullopt;
}

// ---- text helpers ----

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > text.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && (cp < 0x10000 || cp > 0x10FFFF)) ||
        (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    i += len;
  }
  return true;
}

std::size_t utf8_length(std::string_view text) {
  return static_cast<std::size_t>(
      std::count_if(text.begin(), text.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

bool is_bcp47_tag(std::string_view tag) {
  if (tag.empty()) return false;
  std::size_t start = 0;
  bool first = true;
  while (start <= tag.size()) {
    std::size_t end = tag.find('-', start);
    if (end == std::string_view::npos) end = tag.size();
    std::string_view sub = tag.substr(start, end - start);
    if (sub.empty() || sub.size() > 8) return false;
    if (first) {
      if (sub.size() < 2 || !std::all_of(sub.begin(), sub.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); }))
        return false;
      first = false;
    } else if (!std::all_of(sub.begin(), sub.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)); })) {
      return false;
    }
    if (end == tag.size()) break;
    start = end + 1;
  }
  return true;
}

bool is_valid_url(std::string_view url) {
  const auto sep = url.find("://");
  if (sep == std::string_view::npos || sep == 0) return false;
  std::string_view scheme = url.substr(0, sep);
  if (!std::isalpha(static_cast<unsigned char>(scheme[0]))) return false;
  for (char c : scheme) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.') return false;
  }
  std::string_view rest = url.substr(sep + 3);
  std::string_view authority = rest.substr(0, rest.find_first_of("/?#"));
  std::string_view host = authority;
  if (auto at = host.rfind('@'); at != std::string_view::npos) host = host.substr(at + 1);
  if (host.empty()) return false;
  if (host.front() == '[') return host.find(']') != std::string_view::npos;
  if (auto colon = host.rfind(':'); colon != std::string_view::npos) {
    std::string_view port = host.substr(colon + 1);
    host = host.substr(0, colon);
    if (port.empty() || port.size() > 5 ||
        !std::all_of(port.begin(), port.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      return false;
  }
  if (host.empty()) return false;
  return std::all_of(host.begin(), host.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_';
  });
}

// ---- campaign ----

std::uint64_t GenerationCampaign::cell_count() const {
  return static_cast<std::uint64_t>(models.size()) * temperatures.size() * styles.size() * formats.size() *
         languages.size() * veracity_targets.size();
}

void to_json(Json& j, const ModelSpec& v) {
  j = Json{{"provider", to_string(v.provider)}, {"model_name", v.model_name}, {"api_base", v.api_base}};
  put_optional(j, "model_version_pin", v.model_version_pin);
}

void to_json(Json& j, const PromptTemplate& v) {
  j = Json{{"template_id", v.template_id}, {"system_template", v.system_template}, {"user_template", v.user_template}};
}

void to_json(Json& j, const GenerationCampaign& v) {
  Json vt = Json::array();
  for (auto x : v.veracity_targets) vt.push_back(to_string(x));
  j = Json{{"campaign_id", v.campaign_id.to_string()},
           {"name", v.name},
           {"models", v.models},
           {"temperatures", v.temperatures},
           {"styles", v.styles},
           {"formats", v.formats},
           {"languages", v.languages},
           {"veracity_targets", vt},
           {"replicates_per_cell", v.replicates_per_cell},
           {"topics", v.topics},
           {"prompt_template_id", v.prompt_template_id},
           {"seed", v.seed},
           {"created_at", format_rfc3339(v.created_at)}};
  if (v.prompt_template) j["prompt_template"] = *v.prompt_template;
}

PromptTemplate parse_prompt_template(const Json& document) {
  Reader r(document, "PromptTemplate");
  PromptTemplate t;
  if (auto s = r.string("template_id")) t.template_id = *s;
  if (auto s = r.string("system_template", true, false)) t.system_template = *s;
  if (auto s = r.string("user_template")) t.user_template = *s;
  r.finish();
  return t;
}

CampaignValidation validate_campaign(const Json& document) {
  Reader r(document, "GenerationCampaign");
  GenerationCampaign c;
  if (auto id = r.uuid("campaign_id")) c.campaign_id = *id;
  if (auto s = r.string("name")) c.name = *s;

  if (const Json* models = r.array("models")) {
    if (models->empty()) {
      r.add(ErrorCode::kEmptyList, "models", "models must be nonempty");
    }
    for (std::size_t i = 0; i < models->size(); ++i) {
      const std::string prefix = "models[" + std::to_string(i) + "].";
      Reader mr((*models)[i], "ModelSpec");
      ModelSpec m;
      if (auto p = read_enum<ProviderKind>(mr, "provider", parse_provider_kind)) m.provider = *p;
      if (auto s = mr.string("model_name")) m.model_name = *s;
      if (auto s = mr.string("api_base")) {
        m.api_base = *s;
        if (!is_valid_url(*s)) mr.add(ErrorCode::kInvalidValue, "api_base", "api_base must be a valid URL");
      }
      m.model_version_pin = mr.string("model_version_pin", false);
      try {
        mr.finish();
        c.models.push_back(std::move(m));
      } catch (const Error& e) {
        for (const auto& v : e.violations()) r.add(v.code, prefix + v.field, v.message);
      }
    }
  }

  if (const Json* temps = r.array("temperatures")) {
    if (temps->empty()) r.add(ErrorCode::kEmptyList, "temperatures", "temperatures must be nonempty");
    for (const auto& t : *temps) {
      if (!t.is_number() || !std::isfinite(t.get<double>())) {
        r.add(ErrorCode::kInvalidValue, "temperatures", "temperatures must be numbers");
        break;
      }
      const double v = t.get<double>();
      if (v < kMinTemperature || v > kMaxTemperature) {
        r.add(ErrorCode::kOutOfRange, "temperatures", "temperatures must lie in " + format_bounds(kMinTemperature, kMaxTemperature));
        break;
      }
      c.temperatures.push_back(v);
    }
  }

  if (auto v = r.string_list("styles", true, true)) {
    c.styles = *v;
    for (const auto& s : c.styles) {
      if (!is_tag(s)) r.add(ErrorCode::kInvalidValue, "styles", "style tag '" + s + "' must match [a-z][a-z0-9_]*");
    }
  }
  if (auto v = r.string_list("formats", true, true)) {
    c.formats = *v;
    for (const auto& s : c.formats) {
      if (!is_tag(s)) r.add(ErrorCode::kInvalidValue, "formats", "format tag '" + s + "' must match [a-z][a-z0-9_]*");
    }
  }
  if (auto v = r.string_list("languages", true, true)) {
    c.languages = *v;
    for (const auto& s : c.languages) {
      if (!is_bcp47_tag(s)) r.add(ErrorCode::kInvalidValue, "languages", "'" + s + "' is not a BCP-47 tag");
    }
  }
  if (const Json* vt = r.array("veracity_targets")) {
    if (vt->empty()) r.add(ErrorCode::kEmptyList, "veracity_targets", "veracity_targets must be nonempty");
    for (const auto& e : *vt) {
      auto v = e.is_string() ? parse_veracity(e.get<std::string>()) : std::nullopt;
      if (!v) {
        r.add(ErrorCode::kInvalidValue, "veracity_targets", "veracity_targets entries must be 'real' or 'fake'");
        break;
      }
      if (std::find(c.veracity_targets.begin(), c.veracity_targets.end(), *v) != c.veracity_targets.end()) {
        r.add(ErrorCode::kInvalidValue, "veracity_targets", "veracity_targets must not repeat");
        break;
      }
      c.veracity_targets.push_back(*v);
    }
  }
  if (auto n = r.integer("replicates_per_cell")) {
    if (*n < 1 || *n > 1'000'000) {
      r.add(ErrorCode::kOutOfRange, "replicates_per_cell", "replicates_per_cell must lie in [1, 1000000]");
    } else {
      c.replicates_per_cell = static_cast<int>(*n);
    }
  }
  if (auto v = r.string_list("topics", false, false)) c.topics = *v;
  if (auto s = r.string("prompt_template_id")) c.prompt_template_id = *s;
  if (auto s = r.unsigned64("seed")) c.seed = *s;
  if (auto t = r.timestamp("created_at")) c.created_at = *t;
  if (const Json* pt = r.find("prompt_template", false)) {
    try {
      c.prompt_template = parse_prompt_template(*pt);
      if (!c.prompt_template_id.empty() && c.prompt_template->template_id != c.prompt_template_id) {
        r.add(ErrorCode::kInvalidValue, "prompt_template", "prompt_template.template_id must equal prompt_template_id");
      }
    } catch (const Error& e) {
      for (const auto& v : e.violations()) r.add(v.code, "prompt_template." + v.field, v.message);
    }
  }
  r.finish();

  CampaignValidation out;
  out.cell_count = c.cell_count();
  out.task_count = c.task_count();
  out.campaign = std::move(c);
  return out;
}

// ---- fragment ----

void to_json(Json& j, const NewsFragment& v) {
  j = Json{{"fragment_id", v.fragment_id.to_string()},
           {"source", to_string(v.source)},
           {"style", v.style},
           {"format", v.format},
           {"language", v.language},
           {"veracity_label", to_string(v.veracity_label)},
           {"generation_params", v.generation_params.is_null() ? Json::object() : v.generation_params},
           {"text", v.text},
           {"content_hash", v.content_hash},
           {"created_at", format_rfc3339(v.created_at)}};
  if (v.campaign_id) j["campaign_id"] = v.campaign_id->to_string();
  put_optional(j, "model", v.model);
  put_optional(j, "model_version", v.model_version);
  if (v.temperature) j["temperature"] = *v.temperature;
  put_optional(j, "prompt_system", v.prompt_system);
  put_optional(j, "prompt_user", v.prompt_user);
}

bool has_complete_provenance(const NewsFragment& f) {
  if (f.source == Source::kGenerated) {
    return f.model.has_value() && f.prompt_system.has_value() && f.prompt_user.has_value() &&
           f.generation_params.is_object() && !f.generation_params.empty();
  }
  return !f.model && !f.temperature && !f.prompt_system && !f.prompt_user;
}

NewsFragment validate_fragment(const Json& document) {
  Reader r(document, "NewsFragment");
  NewsFragment f;
  if (auto id = r.uuid("fragment_id")) f.fragment_id = *id;
  f.campaign_id = r.uuid("campaign_id", false);
  if (auto s = read_enum<Source>(r, "source", parse_source)) f.source = *s;
  f.model = r.string("model", false);
  f.model_version = r.string("model_version", false);
  f.temperature = r.number("temperature", false);
  if (f.temperature && (*f.temperature < kMinTemperature || *f.temperature > kMaxTemperature)) {
    r.add(ErrorCode::kOutOfRange, "temperature", "temperature must lie in " + format_bounds(kMinTemperature, kMaxTemperature));
  }
  if (auto s = r.string("style")) f.style = *s;
  if (auto s = r.string("format")) f.format = *s;
  if (auto s = r.string("language")) {
    f.language = *s;
    if (!is_bcp47_tag(*s)) r.add(ErrorCode::kInvalidValue, "language", "language must be a BCP-47 tag");
  }
  if (auto v = read_enum<Veracity>(r, "veracity_label", parse_veracity)) f.veracity_label = *v;
  f.prompt_system = r.string("prompt_system", false, false);
  f.prompt_user = r.string("prompt_user", false, false);
  if (const Json* gp = r.find("generation_params", false)) {
    if (!gp->is_object()) {
      r.add(ErrorCode::kInvalidValue, "generation_params", "generation_params must be an object");
    } else {
      f.generation_params = *gp;
    }
  }
  if (auto s = r.string("text", true, false)) {
    f.text = *s;
    if (f.text.empty()) {
      r.add(ErrorCode::kInvalidValue, "text", "text must be nonempty");
    } else if (!is_valid_utf8(f.text)) {
      r.add(ErrorCode::kInvalidValue, "text", "text must be valid UTF-8");
    } else if (utf8_length(f.text) > kMaxFragmentChars) {
      r.add(ErrorCode::kOutOfRange, "text", "text exceeds 8000 characters");
    }
  }
  const std::string expected_hash = content_hash(f.text);
  if (auto s = r.string("content_hash", false)) {
    if (*s != expected_hash) r.add(ErrorCode::kInvalidValue, "content_hash", "content_hash does not match text");
  }
  f.content_hash = expected_hash;
  if (auto t = r.timestamp("created_at")) f.created_at = *t;

  if (r.ok()) {
    if (f.source == Source::kGenerated) {
      if (!f.model) r.add(ErrorCode::kMissingField, "model", "generated fragments require model");
      if (!f.prompt_system) r.add(ErrorCode::kMissingField, "prompt_system", "generated fragments require prompt_system");
      if (!f.prompt_user) r.add(ErrorCode::kMissingField, "prompt_user", "generated fragments require prompt_user");
      if (f.generation_params.empty())
        r.add(ErrorCode::kMissingField, "generation_params", "generated fragments require generation_params");
    } else {
      for (auto [present, name] : {std::pair{f.model.has_value(), "model"}, {f.temperature.has_value(), "temperature"},
                                   {f.prompt_system.has_value(), "prompt_system"},
                                   {f.prompt_user.has_value(), "prompt_user"}}) {
        if (present) r.add(ErrorCode::kInvalidValue, name, std::string("human fragments must not carry ") + name);
      }
    }
  }
  r.finish();
  return f;
}

// ---- participant ----

void to_json(Json& j, const ParticipantProfile& v) {
  j = Json{{"participant_id", v.participant_id},
           {"age_band", to_string(v.age_band)},
           {"education", to_string(v.education)},
           {"ui_language", v.ui_language},
           {"consent", v.consent},
           {"created_at", format_rfc3339(v.created_at)}};
  if (v.political_orientation) {
    j["political_orientation"] = *v.political_orientation;
  } else {
    j["political_orientation"] = "undisclosed";
  }
  j["country"] = v.country ? *v.country : std::string("undisclosed");
}

ParticipantProfile validate_participant(const Json& document) {
  Reader r(document, "ParticipantProfile");
  ParticipantProfile p;
  if (auto s = r.string("participant_id")) p.participant_id = *s;
  if (auto v = read_enum<AgeBand>(r, "age_band", parse_age_band, true, ErrorCode::kInvalidDemographic)) p.age_band = *v;
  if (auto v = read_enum<Education>(r, "education", parse_education, true, ErrorCode::kInvalidDemographic))
    p.education = *v;
  if (const Json* po = r.find("political_orientation", false)) {
    if (po->is_string() && po->get<std::string>() == "undisclosed") {
      p.political_orientation = std::nullopt;
    } else if (po->is_number_integer() && po->get<std::int64_t>() >= 1 && po->get<std::int64_t>() <= 7) {
      p.political_orientation = static_cast<int>(po->get<std::int64_t>());
    } else {
      r.add(ErrorCode::kInvalidDemographic, "political_orientation",
            "political_orientation must be an integer 1..7 or 'undisclosed'");
    }
  }
  if (const Json* c = r.find("country", false)) {
    if (c->is_string() && c->get<std::string>() == "undisclosed") {
      p.country = std::nullopt;
    } else if (c->is_string() && is_alpha2(c->get<std::string>())) {
      p.country = c->get<std::string>();
    } else {
      r.add(ErrorCode::kInvalidDemographic, "country", "country must be ISO-3166 alpha-2 or 'undisclosed'");
    }
  }
  if (auto s = r.string("ui_language", false)) {
    p.ui_language = *s;
    if (!is_bcp47_tag(*s)) r.add(ErrorCode::kInvalidDemographic, "ui_language", "ui_language must be a BCP-47 tag");
  }
  if (auto b = r.boolean("consent")) p.consent = *b;
  if (auto t = r.timestamp("created_at")) p.created_at = *t;
  r.finish();
  return p;
}

// ---- session ----

void to_json(Json& j, const Session& v) {
  Json served = Json::array();
  for (const auto& id : v.served_fragment_ids) served.push_back(id.to_string());
  j = Json{{"session_id", v.session_id.to_string()},
           {"participant_id", v.participant_id},
           {"arm", to_string(v.arm)},
           {"served_fragment_ids", served},
           {"next_trial_index", v.next_trial_index},
           {"started_at", format_rfc3339(v.started_at)}};
  if (v.campaign_id) j["campaign_id"] = v.campaign_id->to_string();
  if (v.completed_at) j["completed_at"] = format_rfc3339(*v.completed_at);
}

Session validate_session(const Json& document) {
  Reader r(document, "Session");
  Session s;
  if (auto id = r.uuid("session_id")) s.session_id = *id;
  if (auto p = r.string("participant_id")) s.participant_id = *p;
  s.campaign_id = r.uuid("campaign_id", false);
  if (auto a = read_enum<Arm>(r, "arm", parse_arm)) s.arm = *a;
  if (const Json* served = r.array("served_fragment_ids")) {
    for (const auto& e : *served) {
      auto id = e.is_string() ? Uuid::parse(e.get<std::string>()) : std::nullopt;
      if (!id) {
        r.add(ErrorCode::kInvalidValue, "served_fragment_ids", "served_fragment_ids entries must be UUIDs");
        break;
      }
      if (std::find(s.served_fragment_ids.begin(), s.served_fragment_ids.end(), *id) != s.served_fragment_ids.end()) {
        r.add(ErrorCode::kInvalidValue, "served_fragment_ids", "served_fragment_ids must not repeat");
        break;
      }
      s.served_fragment_ids.push_back(*id);
    }
  }
  if (auto n = r.integer("next_trial_index")) {
    if (*n < 0 || *n > std::numeric_limits<int>::max()) {
      r.add(ErrorCode::kOutOfRange, "next_trial_index", "next_trial_index must be >= 0");
    } else {
      s.next_trial_index = static_cast<int>(*n);
      if (static_cast<std::size_t>(s.next_trial_index) > s.served_fragment_ids.size())
        r.add(ErrorCode::kInvalidValue, "next_trial_index", "next_trial_index exceeds served_fragment_ids");
    }
  }
  if (auto t = r.timestamp("started_at")) s.started_at = *t;
  s.completed_at = r.timestamp("completed_at", false);
  r.finish();
  return s;
}

// ---- judgment ----

void to_json(Json& j, const Judgment& v) {
  j = Json{{"judgment_id", v.judgment_id.to_string()},
           {"fragment_id", v.fragment_id.to_string()},
           {"session_id", v.session_id.to_string()},
           {"participant_id", v.participant_id},
           {"origin_score", v.origin_score},
           {"veracity_score", v.veracity_score},
           {"familiarity_score", v.familiarity_score},
           {"latency_ms_client", v.latency_ms_client},
           {"latency_ms_server", v.latency_ms_server},
           {"trial_index", v.trial_index},
           {"arm", to_string(v.arm)},
           {"created_at", format_rfc3339(v.created_at)}};
}

namespace {

void read_scores(Reader& r, Judgment& j) {
  for (auto [field, slot] : {std::pair{"origin_score", &j.origin_score}, {"veracity_score", &j.veracity_score},
                             {"familiarity_score", &j.familiarity_score}}) {
    if (auto v = r.integer(field)) {
      if (*v < kMinScore || *v > kMaxScore) {
        r.add(ErrorCode::kScoreOutOfRange, field, std::string(field) + " must lie in [0, 100]");
      } else {
        *slot = static_cast<int>(*v);
      }
    }
  }
}

}  // namespace

Judgment parse_judgment(const Json& document) {
  Reader r(document, "Judgment");
  Judgment j;
  if (auto id = r.uuid("judgment_id")) j.judgment_id = *id;
  if (auto id = r.uuid("fragment_id")) j.fragment_id = *id;
  if (auto id = r.uuid("session_id")) j.session_id = *id;
  if (auto s = r.string("participant_id")) j.participant_id = *s;
  read_scores(r, j);
  for (auto [field, slot] : {std::pair{"latency_ms_client", &j.latency_ms_client}, {"latency_ms_server", &j.latency_ms_server}}) {
    if (auto v = r.integer(field)) {
      if (*v < 0) {
        r.add(ErrorCode::kOutOfRange, field, std::string(field) + " must be >= 0");
      } else {
        *slot = *v;
      }
    }
  }
  if (auto v = r.integer("trial_index")) {
    if (*v < 0 || *v > std::numeric_limits<int>::max()) {
      r.add(ErrorCode::kOutOfRange, "trial_index", "trial_index must be >= 0");
    } else {
      j.trial_index = static_cast<int>(*v);
    }
  }
  if (auto a = read_enum<Arm>(r, "arm", parse_arm)) j.arm = *a;
  if (auto t = r.timestamp("created_at")) j.created_at = *t;
  r.finish();
  return j;
}

Judgment validate_judgment(const Json& document, const JudgmentContext& ctx) {
  if (ctx.session == nullptr) throw Error(ErrorCode::kUnknownSession, "judgment has no session");
  const Session& session = *ctx.session;
  if (!ctx.participant_consent) {
    throw Error(ErrorCode::kNoConsent, "participant " + session.participant_id + " has not consented");
  }

  Reader r(document, "Judgment");
  std::optional<std::int64_t> claimed_trial = r.integer("trial_index", false);
  std::optional<Uuid> claimed_fragment = r.uuid("fragment_id", false);
  r.finish();

  if (claimed_trial && *claimed_trial >= 0 && *claimed_trial < session.next_trial_index) {
    throw Error(ErrorCode::kDuplicateTrial, "trial " + std::to_string(*claimed_trial) + " already has a judgment");
  }
  if (!ctx.pending) throw Error(ErrorCode::kNoPendingTrial, "no trial is pending for this session");
  const PendingTrial& pending = *ctx.pending;
  if (claimed_trial && *claimed_trial != pending.trial_index) {
    throw Error(ErrorCode::kNoPendingTrial, "trial " + std::to_string(*claimed_trial) + " is not the pending trial");
  }
  if (claimed_fragment && *claimed_fragment != pending.fragment_id) {
    throw Error(ErrorCode::kUnknownFragment, "fragment " + claimed_fragment->to_string() + " is not the pending fragment");
  }
  if (std::find(session.served_fragment_ids.begin(), session.served_fragment_ids.end(), pending.fragment_id) ==
      session.served_fragment_ids.end()) {
    throw Error(ErrorCode::kUnknownFragment, "fragment was not served in this session");
  }

  Reader body(document, "Judgment");
  Judgment j;
  read_scores(body, j);
  if (auto v = body.integer("latency_ms_client")) {
    if (*v < 0) {
      body.add(ErrorCode::kOutOfRange, "latency_ms_client", "latency_ms_client must be >= 0");
    } else {
      j.latency_ms_client = *v;
    }
  }
  body.finish();

  j.judgment_id = ctx.judgment_id.is_nil() ? Uuid::random() : ctx.judgment_id;
  j.fragment_id = pending.fragment_id;
  j.session_id = session.session_id;
  j.participant_id = session.participant_id;
  j.latency_ms_server = std::max<std::int64_t>(0, (ctx.received_at - pending.presented_at).count());
  j.trial_index = pending.trial_index;
  j.arm = session.arm;
  j.created_at = ctx.received_at;
  return j;
}

// ---- presentation ----

void to_json(Json& j, const TrialPresentation& v) {
  j = Json{{"session_id", v.session_id.to_string()},
           {"trial_index", v.trial_index},
           {"fragment_id", v.fragment_id.to_string()},
           {"text", v.text},
           {"presented_at", format_rfc3339(v.presented_at)},
           {"prebunk_shown", v.prebunk_shown}};
  if (v.prebunk_text) j["prebunk_text"] = *v.prebunk_text;
}

TrialPresentation parse_presentation(const Json& document) {
  Reader r(document, "TrialPresentation");
  TrialPresentation p;
  if (auto id = r.uuid("session_id")) p.session_id = *id;
  if (auto v = r.integer("trial_index")) {
    if (*v < 0 || *v > std::numeric_limits<int>::max()) {
      r.add(ErrorCode::kOutOfRange, "trial_index", "trial_index must be >= 0");
    } else {
      p.trial_index = static_cast<int>(*v);
    }
  }
  if (auto id = r.uuid("fragment_id")) p.fragment_id = *id;
  if (auto s = r.string("text")) p.text = *s;
  if (auto t = r.timestamp("presented_at")) p.presented_at = *t;
  if (auto b = r.boolean("prebunk_shown")) p.prebunk_shown = *b;
  p.prebunk_text = r.string("prebunk_text", false, false);
  r.finish();
  return p;
}

}  // namespace perceptionlab
