"""Pipeline orchestration: config, run manifests, annotation service, CLI."""
