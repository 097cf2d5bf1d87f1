// Offline stand-in for the generator endpoint: answers every prompt with a
// fixed text, or echoes the prompt back.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

int main(int argc, char** argv) {
  CLI::App app{"fixed-response generator endpoint for tests"};
  int port = 8089;
  std::string text = "42";
  bool echo = false;
  std::string path = "/generate";
  app.add_option("--port", port, "listen port");
  app.add_option("--text", text, "response text");
  app.add_flag("--echo", echo, "echo the prompt back instead of --text");
  app.add_option("--path", path, "endpoint path");
  CLI11_PARSE(app, argc, argv);

  httplib::Server server;
  server.Post(path, [&](const httplib::Request& req, httplib::Response& res) {
    std::string reply = text;
    if (echo) {
      try {
        reply = nlohmann::json::parse(req.body).value("prompt", "");
      } catch (const nlohmann::json::exception&) {
        reply = req.body;
      }
    }
    res.set_content(nlohmann::json{{"text", reply}}.dump(), "application/json");
  });
  std::cout << "listening on 127.0.0.1:" << port << path << std::endl;
  server.listen("127.0.0.1", port);
  return 0;
}
