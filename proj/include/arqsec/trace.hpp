#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "arqsec/crown.hpp"

namespace arqsec {

enum class FrameKind { Init, Data, Ack, Mcast };

inline const char* to_string(FrameKind k) {
  switch (k) {
    case FrameKind::Init: return "INIT";
    case FrameKind::Data: return "DATA";
    case FrameKind::Ack: return "ACK";
    case FrameKind::Mcast: return "MCAST";
  }
  return "?";
}

struct TraceEvent {
  std::uint64_t t = 0;
  std::string actor;  // alice, bob, eve
  FrameKind kind = FrameKind::Data;
  std::uint32_t seq = 0;
  std::optional<VWord> v_h;  // init value for INIT frames; absent on ACKs
  std::optional<std::uint32_t> vg_id;
  std::uint32_t payload_len = 0;
  std::vector<std::pair<std::string, bool>> delivered;  // listener -> received
  std::string outcome;                                   // receiver decision, if any

  bool delivered_to(const std::string& who) const {
    for (const auto& [name, ok] : delivered)
      if (name == who) return ok;
    return false;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["t"] = t;
    j["actor"] = actor;
    j["kind"] = to_string(kind);
    j["seq"] = seq;
    if (v_h) j["v_h"] = v_h->hex();
    if (vg_id) j["vg_id"] = *vg_id;
    j["payload_len"] = payload_len;
    nlohmann::ordered_json d = nlohmann::ordered_json::object();
    for (const auto& [name, ok] : delivered) d[name] = ok ? 1 : 0;
    j["delivered"] = d;
    if (!outcome.empty()) j["outcome"] = outcome;
    return j;
  }
};

struct SessionTrace {
  std::vector<TraceEvent> events;

  void write_jsonl(std::ostream& os) const {
    for (const auto& e : events) os << e.to_json().dump() << '\n';
  }
};

// Eve's capture bits in occurrence order, one per honest INIT frame, honest
// DATA frame and honest ACK respectively.
struct EveObservations {
  std::vector<bool> init;
  std::vector<bool> data;
  std::vector<bool> ack;

  static EveObservations from_trace(const SessionTrace& trace) {
    EveObservations o;
    for (const auto& e : trace.events) {
      if (e.actor == "eve") continue;
      const bool got = e.delivered_to("eve");
      if (e.kind == FrameKind::Init) o.init.push_back(got);
      if (e.kind == FrameKind::Data) o.data.push_back(got);
      if (e.kind == FrameKind::Ack) o.ack.push_back(got);
    }
    return o;
  }
};

struct EveTrackResult {
  std::size_t useful = 0;
  bool blind = true;
  bool v0_known = false;
};

/// Offline usefulness rule from a complete trace. The stored init values are
/// the last transmission of each sequence number; frame i counts as ACKed iff
/// an ACK for it reached Alice (honest or injected).
inline EveTrackResult eve_track(const SessionTrace& trace, const EveObservations& obs) {
  std::map<std::uint32_t, bool> last_capture;
  std::size_t ii = 0;
  std::size_t di = 0;
  std::size_t ai = 0;
  std::map<std::uint32_t, bool> data_capture;
  std::map<std::uint32_t, bool> acked;
  std::map<std::uint32_t, bool> ack_seen;
  std::vector<std::uint32_t> order;
  for (const auto& e : trace.events) {
    if (e.kind == FrameKind::Ack && e.actor == "eve") {
      if (e.delivered_to("alice")) {
        acked[e.seq] = true;
        ack_seen[e.seq] = true;
      }
      continue;
    }
    if (e.actor == "eve") continue;
    switch (e.kind) {
      case FrameKind::Init: last_capture[e.seq] = obs.init.at(ii++); break;
      case FrameKind::Data:
        data_capture[e.seq] = obs.data.at(di++);
        order.push_back(e.seq);
        break;
      case FrameKind::Ack: {
        const bool got = obs.ack.at(ai++);
        if (e.delivered_to("alice")) {
          acked[e.seq] = true;
          ack_seen[e.seq] = ack_seen[e.seq] || got;
        }
        break;
      }
      case FrameKind::Mcast: break;
    }
  }
  EveTrackResult r;
  r.v0_known = !last_capture.empty();
  for (const auto& [seq, got] : last_capture) r.v0_known = r.v0_known && got;
  bool chain = true;
  for (std::uint32_t seq : order) {
    const bool got = data_capture[seq];
    if (r.v0_known && chain && got) ++r.useful;
    if (acked[seq] && !(got && ack_seen[seq])) chain = false;
  }
  r.blind = !(r.v0_known && chain);
  return r;
}

inline EveTrackResult eve_track(const SessionTrace& trace) {
  return eve_track(trace, EveObservations::from_trace(trace));
}

/// V0 recomputed from the trace: XOR of the last value sent under each
/// initialization sequence number.
inline VWord v0_from_trace(const SessionTrace& trace, unsigned width) {
  std::map<std::uint32_t, VWord> last;
  for (const auto& e : trace.events)
    if (e.kind == FrameKind::Init && e.actor != "eve" && e.v_h) last[e.seq] = *e.v_h;
  VWord v = VWord::zero(width);
  for (const auto& [seq, w] : last) v ^= w;
  return v;
}

}  // namespace arqsec
