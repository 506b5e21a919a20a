#include <cmath>

#include "fbesag/inference.hpp"
#include "text_util.hpp"

namespace fbesag {

ObservationData parse_observations_csv(std::string_view text, std::size_t n_areas) {
  const auto lines = detail::split_lines(text);
  ObservationData out;
  bool header = false;
  std::size_t with_time = 0;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto line = detail::trim(lines[ln]);
    const std::size_t lineno = ln + 1;
    if (line.empty() || line.front() == '#') continue;
    auto cells = detail::split(line, ',');
    for (auto& c : cells) c = detail::trim(c);
    if (!header) {
      if (cells.size() != 4 || cells[0] != "area" || cells[1] != "time" || cells[2] != "count" ||
          cells[3] != "offset")
        throw ParseError(lineno, "expected header 'area,time,count,offset'");
      header = true;
      continue;
    }
    if (cells.size() != 4) throw ParseError(lineno, "expected 4 fields, got " + std::to_string(cells.size()));
    Observation o;
    const auto area = detail::parse_number<std::size_t>(cells[0]);
    if (!area || *area < 1 || *area > n_areas)
      throw ParseError(lineno, "area '" + std::string(cells[0]) + "' out of range 1.." +
                                   std::to_string(n_areas));
    o.area = *area - 1;
    if (!cells[1].empty()) {
      const auto t = detail::parse_number<std::size_t>(cells[1]);
      if (!t || *t < 1) throw ParseError(lineno, "time '" + std::string(cells[1]) + "' must be a positive integer");
      o.time = *t - 1;
      out.n_time = std::max(out.n_time, *t);
      ++with_time;
    }
    const auto count = detail::parse_number<std::uint64_t>(cells[2]);
    if (!count) throw ParseError(lineno, "count '" + std::string(cells[2]) + "' must be a non-negative integer");
    o.count = *count;
    const auto offset = detail::parse_number<double>(cells[3]);
    if (!offset || !(*offset > 0) || !std::isfinite(*offset))
      throw ParseError(lineno, "offset '" + std::string(cells[3]) + "' must be a positive number");
    o.offset = *offset;
    out.observations.push_back(o);
  }
  if (!header) throw ParseError(0, "empty observation file");
  if (out.observations.empty()) throw ParseError(0, "no observations");
  if (with_time != 0 && with_time != out.observations.size())
    throw ParseError(0, "time must be given for every observation or for none");
  return out;
}

ObservationData read_observations_file(const std::string& path, std::size_t n_areas) {
  return parse_observations_csv(detail::read_text_file(path), n_areas);
}

}  // namespace fbesag
