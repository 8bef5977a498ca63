#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "pld/error.hpp"

namespace pld::io {

enum class Side { left, right };

inline char to_char(Side s) { return s == Side::left ? 'l' : 'r'; }

/// One line of a split file: "<scene_dir> <frame_index> <side>".
struct SplitEntry {
  std::string scene;
  long frame = 0;
  Side side = Side::left;

  /// The same frame seen by the other camera.
  SplitEntry partner() const { return {scene, frame, side == Side::left ? Side::right : Side::left}; }

  friend bool operator==(const SplitEntry&, const SplitEntry&) = default;
};

/// Entries in file order. Blank lines are skipped.
inline std::vector<SplitEntry> parse_split(const std::string& text) {
  std::vector<SplitEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string scene, frame, side, extra;
    if (!(ls >> scene)) continue;
    if (!(ls >> frame >> side)) throw ParseError(line_no, "expected '<scene> <frame> <side>'");
    if (ls >> extra) throw ParseError(line_no, "unexpected trailing field '" + extra + "'");
    SplitEntry e;
    e.scene = scene;
    std::size_t used = 0;
    try {
      e.frame = std::stol(frame, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != frame.size() || e.frame < 0) throw ParseError(line_no, "bad frame index '" + frame + "'");
    if (side == "l") e.side = Side::left;
    else if (side == "r") e.side = Side::right;
    else throw ParseError(line_no, "side must be 'l' or 'r', got '" + side + "'");
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace pld::io
