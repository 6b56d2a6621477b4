# -*- coding: utf-8 -*-
#
# Configuration file for the Sphinx documentation builder.

import sphinx_rtd_theme

# -- General configuration ------------------------------------------------

extensions = ['sphinxcontrib.programoutput']
templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'magrec'
authors = ['The magrec developers']
copyright = 'the magrec developers'

from importlib.util import module_from_spec, spec_from_file_location
spec = spec_from_file_location('version', '../../src/magrec/_version.py')
module = module_from_spec(spec)
spec.loader.exec_module(module)
release = module.__version__
version = release.rsplit(".", 1)[0]

language = None
exclude_patterns = []
pygments_style = 'sphinx'

# -- Options for HTML output ----------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
html_theme_options = {
    'collapse_navigation': False,
    'display_version': False,
    'navigation_depth': 3,
}
htmlhelp_basename = 'magrecdoc'

# -- Options for manual page output ---------------------------------------

man_pages = [(master_doc, 'magrec', 'magrec Documentation', authors, 1)]
