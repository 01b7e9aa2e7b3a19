#include "cenergy/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <optional>
#include <vector>

#include "cenergy/pipeline.hpp"
#include "cenergy/service.hpp"

namespace cenergy::cli {

namespace {

struct RunFlags {
  std::string place;
  std::string api_key;
  std::string out = "-";
  std::string html;
  std::string fixtures;
  std::string config;
  std::string host = "0.0.0.0";
  int port = 8000;
  bool offline = false;
  bool record = false;
  bool verbose = false;
};

std::string escape_html(std::string_view s)
{
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

void write_file(const std::string& path, std::string_view data)
{
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::InvalidArgument, "cannot write " + path, "output");
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw Error(ErrorKind::InvalidArgument, "failed writing " + path, "output");
}

pipeline::PipelineConfig build_config(const RunFlags& flags)
{
  try {
    auto config = flags.config.empty() ? pipeline::PipelineConfig{} : pipeline::PipelineConfig::load(flags.config);
    if (flags.offline) config.offline = true;
    if (!flags.fixtures.empty()) config.fixture_dir = flags.fixtures;
    config.validate();
    return config;
  } catch (const Error& e) {
    throw e.stage().empty() ? e.with_stage("config") : e;
  }
}

std::string resolve_key(const RunFlags& flags, bool flag_given)
{
  if (flag_given) return flags.api_key;
  if (const char* env = std::getenv(std::string(kApiKeyEnv).c_str())) return env;
  return {};
}

int do_generate(const RunFlags& flags, bool key_given, bool record, std::ostream& out, std::ostream& err)
{
  const auto config = build_config(flags);
  pipeline::Pipeline pipe(config, pipeline::Providers::for_config(config, record));
  const auto report = pipe.generate(flags.place, resolve_key(flags, key_given));
  const std::string json = scene::serialize(report.figure);

  err << report.log_line() << '\n';
  if (flags.verbose) {
    err << report.stats.caption() << '\n';
    for (const auto& w : report.warnings) err << "warning: " << w << '\n';
  }
  if (flags.out == "-") {
    out.write(json.data(), static_cast<std::streamsize>(json.size()));
    out.flush();
  } else {
    write_file(flags.out, json);
  }
  if (!flags.html.empty()) {
    const auto& layout = report.figure.layout;
    write_file(flags.html, html_page(json, layout && layout->title ? *layout->title : flags.place));
  }
  return 0;
}

int do_serve(const RunFlags& flags, std::ostream& err)
{
  const auto config = build_config(flags);
  pipeline::Pipeline pipe(config, pipeline::Providers::for_config(config));
  service::ServiceOptions options;
  options.host = flags.host;
  options.port = flags.port;
  service::Service svc(std::move(pipe), options);
  err << "serving on " << flags.host << ":" << flags.port << (config.offline ? " (offline fixtures)" : "") << '\n';
  if (!svc.listen()) {
    err << "error: cannot listen on " << flags.host << ":" << flags.port << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

std::string html_page(std::string_view figure_json, std::string_view title)
{
  // "</" inside the embedded JSON would end the script element early.
  std::string embedded;
  embedded.reserve(figure_json.size());
  for (std::size_t i = 0; i < figure_json.size(); ++i) {
    if (figure_json[i] == '<' && i + 1 < figure_json.size() && figure_json[i + 1] == '/') embedded += "<\\";
    else embedded.push_back(figure_json[i]);
  }
  std::string page;
  page += "<!doctype html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>";
  page += escape_html(title);
  page += "</title>\n<script src=\"";
  page += kRendererUrl;
  page += "\"></script>\n<style>html,body{margin:0;height:100%}#scene{width:100vw;height:100vh}</style>\n"
          "</head>\n<body>\n<div id=\"scene\"></div>\n<script id=\"figure-json\" type=\"application/json\">";
  page += embedded;
  page += "</script>\n<script>\n"
          "var fig = JSON.parse(document.getElementById(\"figure-json\").textContent);\n"
          "Plotly.newPlot(\"scene\", fig.data, fig.layout || {}, {responsive: true});\n"
          "</script>\n</body>\n</html>\n";
  return page;
}

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Generate 3D urban energy scenes (terrain, buildings, roads, power lines) for a named place"};
  app.name("cenergy");
  app.require_subcommand(1);
  RunFlags flags;

  auto* gen = app.add_subcommand("generate", "Build the scene for a place and write its figure JSON");
  gen->add_option("--place", flags.place, "Place name, e.g. \"Rousay-Orkney Islands-Scotland\"")->required();
  auto* gen_key = gen->add_option("--api-key", flags.api_key, "OpenTopography API key (default: $CENERGY_OPENTOPO_KEY)");
  gen->add_option("--out", flags.out, "Output path for the figure JSON, '-' for stdout");
  gen->add_option("--html", flags.html, "Also write a standalone HTML viewer page");
  auto* gen_offline = gen->add_flag("--offline", flags.offline, "Replay recorded fixtures, never touch the network");
  gen->add_option("--fixtures", flags.fixtures, "Fixture directory for --offline / --record");
  auto* gen_record = gen->add_flag("--record", flags.record, "Record upstream responses into --fixtures");
  gen_offline->excludes(gen_record);
  gen->add_option("--config", flags.config, "JSON pipeline configuration file");
  gen->add_flag("--verbose", flags.verbose, "Print stats summary and warnings");

  auto* serve = app.add_subcommand("serve", "Run the HTTP service: GET /{api_key}/{place}");
  serve->add_option("--host", flags.host, "Listen address");
  serve->add_option("--port", flags.port, "Listen port")->check(CLI::Range(1, 65535));
  serve->add_flag("--offline", flags.offline, "Serve from recorded fixtures");
  serve->add_option("--fixtures", flags.fixtures, "Fixture directory");
  serve->add_option("--config", flags.config, "JSON pipeline configuration file");
  serve->add_flag("--verbose", flags.verbose, "Verbose logging");

  auto* rec = app.add_subcommand("record-fixtures", "Run generate against live services and save fixtures");
  rec->add_option("--place", flags.place, "Place name")->required();
  auto* rec_key = rec->add_option("--api-key", flags.api_key, "OpenTopography API key");
  rec->add_option("--fixtures", flags.fixtures, "Directory to write fixtures into")->required();
  rec->add_option("--out", flags.out, "Output path for the figure JSON, '-' for stdout");
  rec->add_option("--config", flags.config, "JSON pipeline configuration file");
  rec->add_flag("--verbose", flags.verbose, "Print stats summary and warnings");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) {
      if (flags.record && flags.fixtures.empty()) {
        err << "error: --record requires --fixtures\n\n" << gen->help();
        return 2;
      }
      return do_generate(flags, gen_key->count() > 0, flags.record, out, err);
    }
    if (rec->parsed()) return do_generate(flags, rec_key->count() > 0, true, out, err);
    return do_serve(flags, err);
  } catch (const Error& e) {
    err << "error";
    if (!e.stage().empty()) err << " [stage " << e.stage() << "]";
    err << ": " << e.message() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cenergy::cli
