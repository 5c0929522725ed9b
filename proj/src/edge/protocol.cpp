#include "falldef/edge/protocol.hpp"

#include <cmath>

#include "falldef/error.hpp"
#include "falldef/text_format.hpp"
#include "json.hpp"

namespace falldef::edge {

using json = nlohmann::json;

namespace {

json parse_object(std::string_view text, const char* what) {
  json doc = json::parse(text.begin(), text.end(), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorKind::Parse, std::string(what) + " is not valid JSON");
  if (!doc.is_object()) throw Error(ErrorKind::Parse, std::string(what) + " is not a JSON object");
  return doc;
}

double number_field(const json& doc, const char* name) {
  auto it = doc.find(name);
  if (it == doc.end()) throw Error(ErrorKind::Parse, std::string("missing field '") + name + "'", name);
  if (!it->is_number()) {
    throw Error(ErrorKind::Parse, std::string("field '") + name + "' is not a number", name);
  }
  const double v = it->get<double>();
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::Parse, std::string("field '") + name + "' is not finite", name);
  }
  return v;
}

}  // namespace

StreamEvent decode_event(std::string_view line) {
  json doc = parse_object(line, "event");
  StreamEvent ev;
  ev.t = number_field(doc, "t");
  ev.ax = number_field(doc, "ax");
  ev.ay = number_field(doc, "ay");
  ev.az = number_field(doc, "az");
  return ev;
}

std::string encode_event(const StreamEvent& ev) {
  return "{\"t\":" + format_double(ev.t) + ",\"ax\":" + format_double(ev.ax) +
         ",\"ay\":" + format_double(ev.ay) + ",\"az\":" + format_double(ev.az) + "}";
}

std::string encode_ack(std::size_t seq, double t, std::optional<double> p_fall) {
  std::string out = "{\"type\":\"ack\",\"seq\":" + std::to_string(seq) + ",\"t\":" + format_double(t) +
                    ",\"classified\":" + (p_fall ? "true" : "false");
  if (p_fall) out += ",\"p_fall\":" + format_double(*p_fall);
  return out + "}";
}

std::string encode_alert(const AlertEvent& a) {
  return "{\"type\":\"alert\",\"p_fall\":" + format_double(a.p_fall) +
         ",\"window_start_t\":" + format_double(a.window_start_t) +
         ",\"window_end_t\":" + format_double(a.window_end_t) +
         ",\"emitted_at\":" + format_double(a.emitted_at) + "}";
}

std::string encode_error(std::size_t line, const std::string& message, const std::string& field) {
  json doc = {{"type", "error"}, {"line", line}, {"message", message}};
  if (!field.empty()) doc["field"] = field;
  return doc.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string encode_summary(const SessionSummary& s) {
  return "{\"type\":\"summary\",\"events\":" + std::to_string(s.events) +
         ",\"classifications\":" + std::to_string(s.classifications) +
         ",\"alerts\":" + std::to_string(s.alerts) + ",\"errors\":" + std::to_string(s.errors) + "}";
}

namespace {

AlertEvent alert_from(const json& doc) {
  AlertEvent a;
  a.p_fall = number_field(doc, "p_fall");
  a.window_start_t = number_field(doc, "window_start_t");
  a.window_end_t = number_field(doc, "window_end_t");
  a.emitted_at = number_field(doc, "emitted_at");
  return a;
}

std::size_t count_field(const json& doc, const char* name) {
  auto it = doc.find(name);
  if (it == doc.end() || !it->is_number_unsigned()) {
    throw Error(ErrorKind::Parse, std::string("response field '") + name + "' missing or invalid", name);
  }
  return it->get<std::size_t>();
}

}  // namespace

Response decode_response(std::string_view line) {
  json doc = parse_object(line, "response");
  Response r;
  r.type = doc.value("type", std::string());
  if (r.type == "ack") {
    r.seq = count_field(doc, "seq");
    r.t = number_field(doc, "t");
    r.classified = doc.value("classified", false);
    if (doc.contains("p_fall")) r.p_fall = number_field(doc, "p_fall");
  } else if (r.type == "alert") {
    r.alert = alert_from(doc);
  } else if (r.type == "error") {
    r.line = count_field(doc, "line");
    r.message = doc.value("message", std::string());
    r.field = doc.value("field", std::string());
  } else if (r.type == "summary") {
    r.summary = {count_field(doc, "events"), count_field(doc, "classifications"),
                 count_field(doc, "alerts"), count_field(doc, "errors")};
  } else {
    throw Error(ErrorKind::Parse, "unknown response type '" + r.type + "'", "type");
  }
  return r;
}

AlertEvent decode_alert(std::string_view text) { return alert_from(parse_object(text, "alert")); }

}  // namespace falldef::edge
