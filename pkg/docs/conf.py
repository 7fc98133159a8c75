# fragscope documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

import os
import sys

import sphinx_rtd_theme  # noqa: F401

# Get the project root dir, which is the parent dir of this
cwd = os.getcwd()
project_root = os.path.dirname(cwd)

# Insert the source dir first in the PYTHONPATH so the local package
# and its version are used.
sys.path.insert(0, os.path.join(project_root, "src"))
import fragscope  # noqa: E402

# -- General configuration ---------------------------------------------

extensions = ["sphinx.ext.autodoc", "sphinx.ext.viewcode", "sphinx.ext.mathjax"]

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"

project = "fragscope"
copyright = "2026, fragscope developers"

version = fragscope.__version__
release = fragscope.__version__

exclude_patterns = ["_build"]
pygments_style = "sphinx"

# -- Options for HTML output -------------------------------------------

html_theme = "sphinx_rtd_theme"
htmlhelp_basename = "fragscopedoc"

# -- Options for LaTeX / manual output ---------------------------------

latex_documents = [
    ("index", "fragscope.tex", "fragscope Documentation", "fragscope developers", "manual"),
]

man_pages = [("index", "fragscope", "fragscope Documentation", ["fragscope developers"], 1)]
