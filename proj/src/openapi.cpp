#include "nkca/service.hpp"

namespace nkca {

namespace {

constexpr const char* kOpenApi = R"json({
  "openapi": "3.0.3",
  "info": {"title": "nkca variant service", "version": "1"},
  "paths": {
    "/model": {
      "get": {"summary": "Model metadata and request defaults",
              "responses": {"200": {"description": "Model", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Model"}}}}}}
    },
    "/openapi.json": {
      "get": {"summary": "This document", "responses": {"200": {"description": "OpenAPI document"}}}
    },
    "/sessions": {
      "get": {"summary": "List sessions",
              "responses": {"200": {"description": "Sessions", "content": {"application/json": {"schema": {
                "type": "object", "properties": {"sessions": {"type": "array", "items": {"$ref": "#/components/schemas/Session"}}}}}}}}},
      "post": {"summary": "Create a session with a root candidate",
               "requestBody": {"required": true, "content": {"application/json": {"schema": {"$ref": "#/components/schemas/CreateSession"}}}},
               "responses": {
                 "201": {"description": "Created", "content": {"application/json": {"schema": {
                   "type": "object", "properties": {"session_id": {"type": "string"}, "root_candidate": {"$ref": "#/components/schemas/Candidate"}}}}}},
                 "400": {"$ref": "#/components/responses/Error"},
                 "404": {"$ref": "#/components/responses/Error"},
                 "413": {"$ref": "#/components/responses/Error"}}}
    },
    "/sessions/{id}": {
      "get": {"parameters": [{"$ref": "#/components/parameters/Id"}],
              "responses": {"200": {"description": "Session", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Session"}}}},
                            "404": {"$ref": "#/components/responses/Error"}}}
    },
    "/sessions/{id}/lineage": {
      "get": {"parameters": [{"$ref": "#/components/parameters/Id"}],
              "responses": {"200": {"description": "Lineage tree", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Lineage"}}}},
                            "404": {"$ref": "#/components/responses/Error"}}}
    },
    "/sessions/{id}/candidates": {
      "post": {"summary": "Generate variants of a parent candidate",
               "parameters": [{"$ref": "#/components/parameters/Id"}],
               "requestBody": {"required": true, "content": {"application/json": {"schema": {"$ref": "#/components/schemas/CreateCandidates"}}}},
               "responses": {
                 "201": {"description": "Candidates", "content": {"application/json": {"schema": {
                   "type": "object", "properties": {"candidates": {"type": "array", "items": {"$ref": "#/components/schemas/Candidate"}}}}}}},
                 "202": {"$ref": "#/components/responses/Accepted"},
                 "404": {"$ref": "#/components/responses/Error"},
                 "422": {"$ref": "#/components/responses/Error"}}}
    },
    "/sessions/{id}/inpaint": {
      "post": {"summary": "Regenerate the masked elements of a candidate",
               "parameters": [{"$ref": "#/components/parameters/Id"}],
               "requestBody": {"required": true, "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Inpaint"}}}},
               "responses": {
                 "201": {"description": "Candidate", "content": {"application/json": {"schema": {
                   "type": "object", "properties": {"candidate": {"$ref": "#/components/schemas/Candidate"}}}}}},
                 "202": {"$ref": "#/components/responses/Accepted"},
                 "404": {"$ref": "#/components/responses/Error"},
                 "422": {"$ref": "#/components/responses/Error"}}}
    },
    "/candidates/{id}": {
      "get": {"parameters": [{"$ref": "#/components/parameters/Id"}],
              "responses": {"200": {"description": "Candidate", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Candidate"}}}},
                            "404": {"$ref": "#/components/responses/Error"}}}
    },
    "/candidates/{id}/image": {
      "get": {"summary": "PNG rendering, immutable, with ETag",
              "parameters": [{"$ref": "#/components/parameters/Id"},
                             {"name": "If-None-Match", "in": "header", "required": false, "schema": {"type": "string"}}],
              "responses": {"200": {"description": "PNG", "content": {"image/png": {"schema": {"type": "string", "format": "binary"}}}},
                            "304": {"description": "Not modified"},
                            "404": {"$ref": "#/components/responses/Error"}}}
    },
    "/candidates/{id}/values": {
      "get": {"parameters": [{"$ref": "#/components/parameters/Id"}],
              "responses": {"200": {"description": "Raw values", "content": {"application/json": {"schema": {
                "type": "object", "properties": {"id": {"type": "string"}, "shape": {"type": "array", "items": {"type": "integer"}},
                                                 "values": {"type": "array", "items": {"type": "number"}}}}}}},
                            "404": {"$ref": "#/components/responses/Error"}}}
    },
    "/candidates/{id}/verify": {
      "post": {"summary": "Recompute from recorded parameters and compare bit for bit",
               "parameters": [{"$ref": "#/components/parameters/Id"}],
               "responses": {"200": {"description": "Verification", "content": {"application/json": {"schema": {
                 "type": "object", "properties": {"id": {"type": "string"}, "bit_exact": {"type": "boolean"}}}}}},
                             "404": {"$ref": "#/components/responses/Error"}}}
    },
    "/jobs/{id}": {
      "get": {"parameters": [{"$ref": "#/components/parameters/Id"}],
              "responses": {"200": {"description": "Job", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Job"}}}},
                            "404": {"$ref": "#/components/responses/Error"}}}
    }
  },
  "components": {
    "parameters": {
      "Id": {"name": "id", "in": "path", "required": true, "schema": {"type": "string"}}
    },
    "responses": {
      "Error": {"description": "Error", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Error"}}}},
      "Accepted": {"description": "Still running; poll the job URL in Location",
                   "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Job"}}}}
    },
    "schemas": {
      "Seed": {"type": "string", "pattern": "^[0-9]+$", "description": "Unsigned 64-bit integer as decimal text"},
      "Error": {"type": "object", "properties": {"error": {"type": "object", "properties": {
        "status": {"type": "integer"}, "message": {"type": "string"}}}}},
      "Model": {"type": "object", "properties": {
        "checkpoint_digest": {"type": "string"}, "kind": {"type": "string", "enum": ["continuous", "categorical"]},
        "w": {"type": "number"}, "categories": {"type": "integer"},
        "example_shape": {"type": "array", "items": {"type": "integer"}}, "dim": {"type": "integer"},
        "denoiser": {"type": "string"}, "defaults": {"type": "object"}, "limits": {"type": "object"}}},
      "Candidate": {"type": "object",
        "required": ["id", "session_id", "parent_id", "origin", "beta", "steps", "sub_seed", "image_url", "etag"],
        "properties": {
          "id": {"type": "string"}, "session_id": {"type": "string"}, "parent_id": {"type": "string", "nullable": true},
          "origin": {"type": "string", "enum": ["upload", "dataset", "synthesize", "variant", "inpaint"]},
          "beta": {"type": "number"}, "steps": {"type": "integer"}, "sub_seed": {"$ref": "#/components/schemas/Seed"},
          "image_url": {"type": "string"}, "etag": {"type": "string"},
          "created_at": {"type": "string", "format": "date-time"}, "extra": {"type": "object"}}},
      "LineageNode": {"allOf": [{"$ref": "#/components/schemas/Candidate"},
        {"type": "object", "properties": {"children": {"type": "array", "items": {"$ref": "#/components/schemas/LineageNode"}}}}]},
      "Lineage": {"type": "object", "properties": {
        "session_id": {"type": "string"}, "count": {"type": "integer"}, "root": {"$ref": "#/components/schemas/LineageNode"}}},
      "Session": {"type": "object", "properties": {
        "id": {"type": "string"}, "created_at": {"type": "string"}, "base_seed": {"$ref": "#/components/schemas/Seed"},
        "checkpoint_digest": {"type": "string"}, "source": {"type": "object"}, "candidates": {"type": "integer"}}},
      "CreateSession": {"type": "object", "required": ["source"], "properties": {
        "source": {"type": "string", "enum": ["upload", "dataset-index", "synthesize"]},
        "image": {"type": "string", "description": "Base64 PNG for upload"},
        "index": {"type": "integer", "description": "Dataset example for dataset-index"},
        "seed": {"$ref": "#/components/schemas/Seed"}}},
      "CreateCandidates": {"type": "object", "required": ["parent_id"], "properties": {
        "parent_id": {"type": "string"},
        "beta": {"type": "number", "default": 0.2, "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "steps": {"type": "integer", "default": 100, "maximum": 10000},
        "n": {"type": "integer", "default": 8, "minimum": 1, "maximum": 64},
        "sub_seeds": {"type": "array", "items": {"$ref": "#/components/schemas/Seed"}}}},
      "Inpaint": {"type": "object", "required": ["candidate_id", "mask"], "properties": {
        "candidate_id": {"type": "string"},
        "mask": {"description": "Base64 PNG (nonzero pixels are regenerated), a 0/1 list per element, or {tiles, size}",
                 "oneOf": [{"type": "string"},
                           {"type": "array", "items": {"type": "integer", "enum": [0, 1]}},
                           {"type": "object", "properties": {"tiles": {"type": "integer"}, "size": {"type": "integer"}}}]},
        "steps": {"type": "integer"}, "beta_start": {"type": "number"}, "beta_end": {"type": "number"},
        "seed": {"$ref": "#/components/schemas/Seed"}}},
      "Job": {"type": "object", "properties": {
        "job_id": {"type": "string"}, "status": {"type": "string", "enum": ["running", "succeeded", "failed"]},
        "code": {"type": "integer"}, "result": {"type": "object"}}}
    }
  }
})json";

}  // namespace

nlohmann::json Service::openapi() {
  static const nlohmann::json doc = nlohmann::json::parse(kOpenApi);
  return doc;
}

}  // namespace nkca
