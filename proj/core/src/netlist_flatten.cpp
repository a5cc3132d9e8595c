#include <map>
#include <set>
#include <string>

#include "qfp/netlist.hpp"

namespace qfp {

namespace {

void check_recursion(const Netlist& n, const std::string& name, std::set<std::string>& stack,
                     std::set<std::string>& done) {
  if (done.count(name)) return;
  if (!stack.insert(name).second)
    throw NetlistError(NetlistErrorCode::RecursionDetected, 0, 0, "subckt " + name);
  auto it = n.subckts.find(name);
  if (it != n.subckts.end()) {
    for (const auto& d : it->second.devices) {
      if (const auto* inst = std::get_if<SubcktInstance>(&d.body))
        check_recursion(n, inst->subckt, stack, done);
    }
  }
  stack.erase(name);
  done.insert(name);
}

void expand_into(const Netlist& n, const std::vector<Device>& devices, const std::string& prefix,
                 const std::map<std::string, std::string>& node_map, std::vector<Device>& out) {
  auto map_node = [&](const std::string& node) -> std::string {
    if (node == "0") return node;
    auto it = node_map.find(node);
    if (it != node_map.end()) return it->second;
    return prefix.empty() ? node : prefix + node;
  };
  // Keeps the kind letter first so flattened netlists stay inside the
  // grammar: "l1" inside instance "x1" becomes "lx1.l1".
  auto map_name = [&](const std::string& name) {
    return prefix.empty() ? name : std::string(1, name[0]) + prefix + name;
  };

  for (const auto& d : devices) {
    if (const auto* inst = std::get_if<SubcktInstance>(&d.body)) {
      const SubcircuitDef& def = n.subckts.at(inst->subckt);
      if (def.ports.size() != d.terminals.size())
        throw NetlistError(NetlistErrorCode::ArityMismatch, 0, 0,
                           prefix + d.name + ": " + std::to_string(d.terminals.size()) +
                               " nodes for " + std::to_string(def.ports.size()) +
                               "-port subckt " + inst->subckt);
      std::map<std::string, std::string> binding;
      for (size_t i = 0; i < def.ports.size(); ++i)
        binding[def.ports[i]] = map_node(d.terminals[i]);
      expand_into(n, def.devices, prefix + d.name + ".", binding, out);
      continue;
    }

    Device flat = d;
    flat.name = map_name(d.name);
    for (auto& t : flat.terminals) t = map_node(t);
    if (auto* mutual = std::get_if<MutualCoupling>(&flat.body)) {
      mutual->first = map_name(mutual->first);
      mutual->second = map_name(mutual->second);
    }
    out.push_back(std::move(flat));
  }
}

}  // namespace

Netlist flatten(const Netlist& n) {
  std::set<std::string> done;
  for (const auto& d : n.devices) {
    if (const auto* inst = std::get_if<SubcktInstance>(&d.body)) {
      std::set<std::string> stack;
      check_recursion(n, inst->subckt, stack, done);
    }
  }

  Netlist flat;
  flat.title = n.title;
  flat.models = n.models;
  expand_into(n, n.devices, "", {}, flat.devices);
  validate(flat);
  return flat;
}

}  // namespace qfp
