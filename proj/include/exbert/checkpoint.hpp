#pragma once

// Text checkpoint container.
//
//   exbert-checkpoint 1
//   meta <key> <value>          model configuration, seed and run settings
//   tensor <name> <rows> <cols>
//   <row 0 values> ...          C99 hexadecimal floats, one line per row
//   end
//
// Hex floats make save -> load -> save bitwise stable.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "exbert/error.hpp"
#include "exbert/model.hpp"
#include "exbert/text.hpp"

namespace exbert {

inline constexpr std::string_view kCheckpointMagic = "exbert-checkpoint 1";

struct Checkpoint {
  ModelConfig config;
  ModelParams<double> params;
  std::map<std::string, std::string> meta;
};

inline void config_to_meta(const ModelConfig& c, std::map<std::string, std::string>& meta) {
  meta["dim"] = std::to_string(c.dim);
  meta["heads"] = std::to_string(c.heads);
  meta["hidden1"] = std::to_string(c.first_hidden());
  meta["hidden2"] = std::to_string(c.second_hidden());
  meta["classes"] = std::to_string(c.classes);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", c.dropout);
  meta["dropout"] = buf;
  meta["gate_input"] = to_string(c.gate_input);
  meta["ablate_knowledge"] = c.ablate_knowledge ? "1" : "0";
}

inline ModelConfig config_from_meta(const std::map<std::string, std::string>& meta) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParseError("checkpoint is missing meta key " + key);
    return it->second;
  };
  ModelConfig c;
  try {
    c.dim = std::stol(get("dim"));
    c.heads = std::stol(get("heads"));
    c.hidden1 = std::stol(get("hidden1"));
    c.hidden2 = std::stol(get("hidden2"));
    c.classes = std::stol(get("classes"));
    c.dropout = std::strtod(get("dropout").c_str(), nullptr);
  } catch (const std::invalid_argument&) {
    throw ParseError("bad numeric meta value in checkpoint");
  }
  c.gate_input = parse_gate_input(get("gate_input"));
  c.ablate_knowledge = get("ablate_knowledge") == "1";
  c.validate();
  return c;
}

inline void write_checkpoint(std::ostream& out, const ModelConfig& config, const ModelParams<double>& params,
                             std::map<std::string, std::string> meta) {
  config_to_meta(config, meta);
  out << kCheckpointMagic << '\n';
  for (const auto& [k, v] : meta) out << "meta " << k << ' ' << v << '\n';
  char buf[48];
  params.visit([&](const std::string& name, const MatrixD& m) {
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%a", m(r, c));
        if (c) out << ' ';
        out << buf;
      }
      out << '\n';
    }
  });
  out << "end\n";
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                            const ModelParams<double>& params, const std::map<std::string, std::string>& meta = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  write_checkpoint(out, config, params, meta);
  if (!out) throw IoError("write failure: " + path.string());
}

inline Checkpoint read_checkpoint(std::istream& in, const std::string& source = "checkpoint") {
  std::string line;
  if (!std::getline(in, line) || text::strip_cr(line) != kCheckpointMagic) {
    throw ParseError(source + ": not an exbert checkpoint");
  }
  Checkpoint ck;
  std::map<std::string, MatrixD> tensors;
  bool ended = false;
  while (std::getline(in, line)) {
    auto view = text::strip_cr(line);
    if (view == "end") {
      ended = true;
      break;
    }
    if (view.starts_with("meta ")) {
      auto rest = view.substr(5);
      auto sp = rest.find(' ');
      if (sp == std::string_view::npos) throw ParseError(source + ": bad meta line");
      ck.meta[std::string(rest.substr(0, sp))] = std::string(rest.substr(sp + 1));
      continue;
    }
    if (!view.starts_with("tensor ")) throw ParseError(source + ": unexpected line: " + std::string(view));
    std::istringstream head{std::string(view.substr(7))};
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    if (!(head >> name >> rows >> cols) || rows < 0 || cols < 0) throw ParseError(source + ": bad tensor header");
    MatrixD m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw ParseError(source + ": truncated tensor " + name);
      const char* p = line.c_str();
      for (Eigen::Index c = 0; c < cols; ++c) {
        char* endp = nullptr;
        m(r, c) = std::strtod(p, &endp);
        if (endp == p) throw ParseError(source + ": bad value in tensor " + name);
        p = endp;
      }
    }
    tensors[name] = std::move(m);
  }
  if (!ended) throw ParseError(source + ": missing end marker");
  ck.config = config_from_meta(ck.meta);
  ck.params = zero_params<double>(ck.config);
  ck.params.visit([&](const std::string& name, MatrixD& m) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ParseError(source + ": missing tensor " + name);
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw ShapeError(source + ": tensor " + name + " has shape " + std::to_string(it->second.rows()) + "x" +
                       std::to_string(it->second.cols()) + ", config expects " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()));
    }
    m = std::move(it->second);
  });
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace exbert
