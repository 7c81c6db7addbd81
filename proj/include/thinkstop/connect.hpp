#pragma once

#include "thinkstop/client.hpp"
#include "thinkstop/simtarget.hpp"

#include <memory>
#include <string>
#include <string_view>

namespace thinkstop {

/// A resolved target: the endpoint description, the transport behind it and, for
/// sim:// targets, the in-process simulator.
struct OpenedTarget {
  EndpointDescriptor endpoint;
  std::shared_ptr<Transport> transport;
  std::shared_ptr<SimTarget> sim;

  ChatClient client(std::shared_ptr<TokenBucket> limiter = nullptr) const {
    return ChatClient(endpoint, transport, std::move(limiter));
  }
};

bool is_sim_uri(std::string_view uri);

/// Parses "sim://[profile][?k=v&...]" (a bare "sim://k=v&..." is also accepted).
/// The profile is a built-in name ("default", "always-empty", "never-empty") or a JSON
/// profile path. Parameters:
///   seed=K                 rng_seed
///   trigger=P, special=P   every operation and the fallback
///   trigger_<op>=P, special_<op>=P   one operation (op: add, sub, mul, div)
///   prefix1_normal=0|1, prefix=0|1 (prefix-completion support)
///   ratio=R                compressor mode ratio
///   answer=exact|canned
/// Throws UsageError for an unknown parameter or malformed value.
SimBehavior parse_sim_uri(std::string_view uri);

/// Resolves http(s):// and sim:// URIs. For http(s) the descriptor `base` supplies the
/// model name, key variable and limits; for sim:// its model name and prefix support are
/// taken from the profile unless `base` sets a model name.
OpenedTarget open_target(const std::string& uri, EndpointDescriptor base = {});

}  // namespace thinkstop
