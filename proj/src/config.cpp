// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include "erwin/model.hpp"

namespace erwin {

namespace {

bool is_pow2(i64 v) { return v >= 1 && (v & (v - 1)) == 0; }

}  // namespace

void ErwinConfig::validate() const {
  const size_t stage_count = channels.size();
  if (stage_count < 1) throw ConfigError("at least one stage required");
  if (enc_depths.size() != stage_count || enc_heads.size() != stage_count || ball_sizes.size() != stage_count ||
      strides.size() != stage_count)
    throw ConfigError("channels, enc-depths, enc-heads, window-size and pooling must all have one entry per stage");
  if (dec_depths.size() != stage_count - 1 || dec_heads.size() != stage_count - 1)
    throw ConfigError("decoder lists must have one entry per non-bottleneck stage (" +
                      std::to_string(stage_count - 1) + ")");
  if (dim != 2 && dim != 3) throw ConfigError("dim must be 2 or 3");
  if (in_features < 0) throw ConfigError("in-features must be >= 0");
  if (out_channels < 1) throw ConfigError("out-channels must be >= 1");
  for (size_t s = 0; s < stage_count; ++s) {
    if (channels[s] < 1) throw ConfigError("channels must be positive");
    if (enc_depths[s] < 0 || enc_heads[s] < 1) throw ConfigError("bad encoder depth/heads at stage " + std::to_string(s));
    if (channels[s] % enc_heads[s] != 0)
      throw ConfigError("channels " + std::to_string(channels[s]) + " not divisible by " +
                        std::to_string(enc_heads[s]) + " heads at stage " + std::to_string(s));
    if (!is_pow2(ball_sizes[s])) throw ConfigError("window size must be a power of two");
    if (!is_pow2(strides[s])) throw ConfigError("pooling stride must be a power of two");
  }
  if (strides.back() != 1) throw ConfigError("pooling stride of the last stage must be 1");
  for (size_t s = 0; s + 1 < stage_count; ++s) {
    if (dec_depths[s] < 0 || dec_heads[s] < 1) throw ConfigError("bad decoder depth/heads at stage " + std::to_string(s));
    if (channels[s] % dec_heads[s] != 0)
      throw ConfigError("channels not divisible by decoder heads at stage " + std::to_string(s));
    if (strides[s] > 1) {
      if (channels[s + 1] <= channels[s])
        throw ConfigError("channels must grow across pooling (stage " + std::to_string(s) + ")");
      if (channels[s + 1] % strides[s] != 0)
        throw ConfigError("channels after pooling must be divisible by the stride (stage " + std::to_string(s) + ")");
    } else if (channels[s + 1] != channels[s]) {
      throw ConfigError("stride-1 stages must keep the channel width (stage " + std::to_string(s) + ")");
    }
  }
  if (mpnn.hidden < 1 || mpnn.hidden > 32)
    throw ConfigError("mpnn hidden dim must be in [1, 32], got " + std::to_string(mpnn.hidden));
  if (mpnn.steps < 0) throw ConfigError("mp-steps must be >= 0");
  if (mpnn.steps > 0 && mpnn.k_neighbors < 1) throw ConfigError("knn must be >= 1 when mp-steps > 0");
}

namespace {

std::vector<i64> parse_int_list(const std::string& value, const std::string& key) {
  std::vector<i64> out;
  std::istringstream ss(value);
  std::string tok;
  while (ss >> tok) {
    try {
      size_t pos = 0;
      out.push_back(std::stoll(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ParseError("config key '" + key + "': cannot parse integer '" + tok + "'");
    }
  }
  if (out.empty()) throw ParseError("config key '" + key + "': empty value");
  return out;
}

std::vector<int> to_ints(const std::vector<i64>& v) {
  std::vector<int> out;
  out.reserve(v.size());
  for (i64 x : v) out.push_back(static_cast<int>(x));
  return out;
}

}  // namespace

ErwinConfig parse_config(std::istream& in) {
  ErwinConfig cfg;
  bool saw_dec_depths = false, saw_dec_heads = false;
  std::string line;
  i64 line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const size_t colon = line.find(':');
    if (colon == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) + ": expected 'key: value'");
    std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    key.erase(key.find_last_not_of(" \t") + 1);

    if (key == "dim") cfg.dim = static_cast<int>(parse_int_list(value, key)[0]);
    else if (key == "in-features") cfg.in_features = parse_int_list(value, key)[0];
    else if (key == "out-channels") cfg.out_channels = parse_int_list(value, key)[0];
    else if (key == "channels") cfg.channels = parse_int_list(value, key);
    else if (key == "enc-depths") cfg.enc_depths = to_ints(parse_int_list(value, key));
    else if (key == "enc-heads") cfg.enc_heads = to_ints(parse_int_list(value, key));
    else if (key == "dec-depths") { cfg.dec_depths = to_ints(parse_int_list(value, key)); saw_dec_depths = true; }
    else if (key == "dec-heads") { cfg.dec_heads = to_ints(parse_int_list(value, key)); saw_dec_heads = true; }
    else if (key == "window-size" || key == "ball-size") cfg.ball_sizes = parse_int_list(value, key);
    else if (key == "pooling") cfg.strides = parse_int_list(value, key);
    else if (key == "rotate") cfg.rotate = parse_int_list(value, key)[0] != 0;
    else if (key == "mpnn-dim") cfg.mpnn.hidden = static_cast<int>(parse_int_list(value, key)[0]);
    else if (key == "mp-steps") cfg.mpnn.steps = static_cast<int>(parse_int_list(value, key)[0]);
    else if (key == "knn") cfg.mpnn.k_neighbors = static_cast<int>(parse_int_list(value, key)[0]);
    else if (key == "seed") cfg.seed = static_cast<u64>(parse_int_list(value, key)[0]);
    else throw ParseError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  // Single window size / stride broadcast over stages.
  if (cfg.ball_sizes.size() == 1 && cfg.channels.size() > 1)
    cfg.ball_sizes.assign(cfg.channels.size(), cfg.ball_sizes[0]);
  if (!saw_dec_depths && cfg.channels.size() >= 1)
    cfg.dec_depths.assign(cfg.channels.size() - 1, 1);
  if (!saw_dec_heads)
    cfg.dec_heads = std::vector<int>(cfg.enc_heads.begin(), cfg.enc_heads.begin() + (cfg.channels.size() - 1));
  cfg.validate();
  return cfg;
}

ErwinConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path);
  return parse_config(in);
}

void write_config(const ErwinConfig& cfg, std::ostream& out) {
  auto list = [&](const std::string& key, const auto& values) {
    out << key << ":";
    for (auto v : values) out << " " << static_cast<i64>(v);
    out << "\n";
  };
  out << "dim: " << cfg.dim << "\n";
  out << "in-features: " << cfg.in_features << "\n";
  out << "out-channels: " << cfg.out_channels << "\n";
  list("channels", cfg.channels);
  list("enc-depths", cfg.enc_depths);
  list("enc-heads", cfg.enc_heads);
  if (!cfg.dec_depths.empty()) list("dec-depths", cfg.dec_depths);
  if (!cfg.dec_heads.empty()) list("dec-heads", cfg.dec_heads);
  list("window-size", cfg.ball_sizes);
  list("pooling", cfg.strides);
  out << "rotate: " << (cfg.rotate ? 1 : 0) << "\n";
  out << "mpnn-dim: " << cfg.mpnn.hidden << "\n";
  out << "mp-steps: " << cfg.mpnn.steps << "\n";
  out << "knn: " << cfg.mpnn.k_neighbors << "\n";
  out << "seed: " << cfg.seed << "\n";
}

// Learnable element count:
//   embed:   [F*H] + H + steps * ((2H+d)H + H + H^2 + H + 2H*H + H + H^2 + H) + H*C0 + C0
//   block C: 10*C^2 + d*C + 4*C + heads       (ln pair, qkvo, wpos, sigma, ffn)
//   pool s:  g*(C_s+d)*C_{s+1};  unpool s: (C_{s+1}/g + d)*C_s     (stride g > 1)
//   readout: C0*out + out
u64 param_count(const ErwinConfig& cfg) {
  cfg.validate();
  const u64 H = static_cast<u64>(cfg.mpnn.hidden);
  const u64 d = static_cast<u64>(cfg.dim);
  u64 total = 0;
  if (cfg.in_features > 0) total += static_cast<u64>(cfg.in_features) * H;
  total += H;  // embed.in.b
  total += static_cast<u64>(cfg.mpnn.steps) * ((2 * H + d) * H + H + H * H + H + (2 * H) * H + H + H * H + H);
  total += H * static_cast<u64>(cfg.channels[0]) + static_cast<u64>(cfg.channels[0]);

  auto block_elems = [&](u64 c, u64 heads) { return 10 * c * c + d * c + 4 * c + heads; };
  const size_t stages = cfg.channels.size();
  for (size_t s = 0; s < stages; ++s)
    total += static_cast<u64>(cfg.enc_depths[s]) *
             block_elems(static_cast<u64>(cfg.channels[s]), static_cast<u64>(cfg.enc_heads[s]));
  for (size_t s = 0; s + 1 < stages; ++s) {
    const u64 g = static_cast<u64>(cfg.strides[s]);
    if (g > 1) {
      total += g * (static_cast<u64>(cfg.channels[s]) + d) * static_cast<u64>(cfg.channels[s + 1]);
      total += (static_cast<u64>(cfg.channels[s + 1]) / g + d) * static_cast<u64>(cfg.channels[s]);
    }
    total += static_cast<u64>(cfg.dec_depths[s]) *
             block_elems(static_cast<u64>(cfg.channels[s]), static_cast<u64>(cfg.dec_heads[s]));
  }
  total += static_cast<u64>(cfg.channels[0]) * static_cast<u64>(cfg.out_channels) +
           static_cast<u64>(cfg.out_channels);
  return total;
}

}  // namespace erwin
