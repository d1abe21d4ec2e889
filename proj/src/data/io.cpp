#include "fedtrans/data/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "fedtrans/errors.hpp"
#include "fedtrans/text.hpp"

namespace fedtrans::data {

using tabular::FeatureKind;

namespace {

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  return out;
}

std::string location(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line);
}

bool is_missing_token(const std::string& field) {
  return field.empty() || field == "NA" || field == "nan" || field == "NaN";
}

}  // namespace

DatasetSchema load_schema(const std::string& path) {
  DatasetSchema schema;
  schema.treatment_column.clear();
  schema.outcome_column.clear();
  const auto lines = text::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.empty() || line.front() == '#') continue;
    const auto fields = text::split_csv_line(line);
    const std::string& tag = fields[0];
    if (tag == "feature" && fields.size() == 3) {
      try {
        schema.features.push_back({fields[1], tabular::parse_feature_kind(fields[2])});
      } catch (const ConfigurationError& e) {
        throw LoadError(location(path, i + 1) + ": " + e.what());
      }
    } else if (tag == "treatment" && fields.size() == 2) {
      schema.treatment_column = fields[1];
    } else if (tag == "outcome" && fields.size() == 2) {
      schema.outcome_column = fields[1];
    } else {
      throw LoadError(location(path, i + 1) + ": unrecognized schema line '" + line + "'");
    }
  }
  if (schema.treatment_column.empty()) throw LoadError(path + ": no treatment line");
  if (schema.outcome_column.empty()) throw LoadError(path + ": no outcome line");
  try {
    schema.validate();
  } catch (const ConfigurationError& e) {
    throw LoadError(path + ": " + e.what());
  }
  return schema;
}

void write_schema(const std::string& path, const DatasetSchema& schema) {
  auto out = open_for_write(path);
  for (const auto& f : schema.features) {
    out << "feature," << text::csv_escape(f.name) << ',' << tabular::to_string(f.kind) << '\n';
  }
  out << "treatment," << text::csv_escape(schema.treatment_column) << '\n';
  out << "outcome," << text::csv_escape(schema.outcome_column) << '\n';
}

std::vector<DataRecord> load_records(const std::string& data_path, const DatasetSchema& schema,
                                     std::size_t num_treatments) {
  const auto lines = text::read_lines(data_path);
  if (lines.empty()) throw LoadError(data_path + ": missing header row");
  const auto header = text::split_csv_line(lines[0]);
  auto column = [&](const std::string& name) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    throw LoadError(data_path + ": missing column '" + name + "'");
  };
  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.features) feature_cols.push_back(column(f.name));
  const std::size_t treatment_col = column(schema.treatment_column);
  const std::size_t outcome_col = column(schema.outcome_column);

  std::vector<DataRecord> records;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    const auto fields = text::split_csv_line(lines[row]);
    const std::string where = location(data_path, row + 1);
    if (fields.size() != header.size()) {
      throw LoadError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    DataRecord r;
    r.id = records.size();
    for (std::size_t k = 0; k < schema.features.size(); ++k) {
      const auto& f = schema.features[k];
      const std::string& field = fields[feature_cols[k]];
      if (f.kind == FeatureKind::categorical) {
        r.covariates.emplace(f.name, field);
      } else if (is_missing_token(field)) {
        r.covariates.emplace(f.name, std::numeric_limits<double>::quiet_NaN());
      } else {
        auto v = text::parse_double(field);
        if (!v) throw LoadError(where + ": unparseable numeric '" + field + "' for " + f.name);
        r.covariates.emplace(f.name, *v);
      }
    }
    const auto t = text::parse_integer(fields[treatment_col]);
    if (!t || *t < 0 || static_cast<std::size_t>(*t) >= num_treatments) {
      throw LoadError(where + ": treatment '" + fields[treatment_col] + "' outside [0, " +
                      std::to_string(num_treatments) + ")");
    }
    r.treatment = static_cast<std::size_t>(*t);
    const auto y = text::parse_double(fields[outcome_col]);
    if (!y) throw LoadError(where + ": unparseable outcome '" + fields[outcome_col] + "'");
    r.outcome = *y;
    records.push_back(std::move(r));
  }
  return records;
}

LoadedDataset load_dataset(const std::string& data_path, const std::string& schema_path,
                           std::size_t num_treatments,
                           const std::optional<std::string>& potential_outcomes_path) {
  LoadedDataset ds{load_schema(schema_path), {}};
  ds.records = load_records(data_path, ds.schema, num_treatments);
  if (potential_outcomes_path) {
    attach_potential_outcomes(*potential_outcomes_path, ds.records, num_treatments);
  }
  return ds;
}

void write_dataset(const std::string& path, const DatasetSchema& schema,
                   const std::vector<DataRecord>& records) {
  auto out = open_for_write(path);
  for (const auto& f : schema.features) out << text::csv_escape(f.name) << ',';
  out << text::csv_escape(schema.treatment_column) << ',' << text::csv_escape(schema.outcome_column)
      << '\n';
  for (const auto& r : records) {
    for (const auto& f : schema.features) {
      const auto& v = r.covariates.at(f.name);
      if (const auto* s = std::get_if<std::string>(&v)) {
        out << text::csv_escape(*s);
      } else {
        const double x = std::get<double>(v);
        if (!std::isnan(x)) out << text::format_double(x);
      }
      out << ',';
    }
    out << r.treatment << ',' << text::format_double(r.outcome) << '\n';
  }
}

void write_potential_outcomes(const std::string& path, const std::vector<DataRecord>& records,
                              std::size_t num_treatments) {
  auto out = open_for_write(path);
  for (std::size_t j = 0; j < num_treatments; ++j) out << (j ? "," : "") << "mu_" << j;
  out << '\n';
  for (const auto& r : records) {
    if (!r.potential_outcomes || r.potential_outcomes->size() != num_treatments) {
      throw ContractError("record " + std::to_string(r.id) + " lacks potential outcomes");
    }
    for (std::size_t j = 0; j < num_treatments; ++j) {
      out << (j ? "," : "") << text::format_double((*r.potential_outcomes)[j]);
    }
    out << '\n';
  }
}

void attach_potential_outcomes(const std::string& path, std::vector<DataRecord>& records,
                               std::size_t num_treatments) {
  const auto lines = text::read_lines(path);
  std::size_t next = 0;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    const auto fields = text::split_csv_line(lines[row]);
    if (fields.size() != num_treatments) {
      throw LoadError(location(path, row + 1) + ": expected " + std::to_string(num_treatments) +
                      " potential outcomes");
    }
    if (next >= records.size()) throw LoadError(path + ": more rows than the data file");
    std::vector<double> mu;
    for (const auto& f : fields) {
      auto v = text::parse_double(f);
      if (!v) throw LoadError(location(path, row + 1) + ": unparseable value '" + f + "'");
      mu.push_back(*v);
    }
    records[next++].potential_outcomes = std::move(mu);
  }
  if (next != records.size()) throw LoadError(path + ": fewer rows than the data file");
}

std::map<std::size_t, std::vector<double>> load_descriptions(const std::string& path) {
  std::map<std::size_t, std::vector<double>> out;
  std::optional<std::size_t> width;
  const auto lines = text::read_lines(path);
  for (std::size_t row = 0; row < lines.size(); ++row) {
    if (lines[row].empty() || lines[row].front() == '#') continue;
    const auto fields = text::split_csv_line(lines[row]);
    const std::string where = location(path, row + 1);
    const auto id = text::parse_integer(fields[0]);
    if (!id || *id < 0) throw LoadError(where + ": bad treatment id '" + fields[0] + "'");
    std::vector<double> vec;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      auto v = text::parse_double(fields[i]);
      if (!v) throw LoadError(where + ": unparseable value '" + fields[i] + "'");
      vec.push_back(*v);
    }
    if (vec.empty()) throw LoadError(where + ": empty description vector");
    if (width && *width != vec.size()) throw LoadError(where + ": inconsistent vector width");
    width = vec.size();
    if (!out.emplace(static_cast<std::size_t>(*id), std::move(vec)).second) {
      throw LoadError(where + ": duplicate treatment id");
    }
  }
  return out;
}

void write_descriptions(const std::string& path,
                        const std::map<std::size_t, std::vector<double>>& descriptions) {
  auto out = open_for_write(path);
  for (const auto& [id, vec] : descriptions) {
    out << id;
    for (double x : vec) out << ',' << text::format_double(x);
    out << '\n';
  }
}

}  // namespace fedtrans::data
