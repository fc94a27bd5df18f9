# -*- coding: utf-8 -*-
#
# fampe documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

import os
import sys
sys.path.insert(0, os.path.abspath('../..'))

import fampe.version

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc'
    ,'sphinx.ext.napoleon'
    ]

autodoc_member_order = 'bysource'
napoleon_google_docstring = True

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'fampe'
copyright = u'2026, the fampe developers'
author = u'the fampe developers'

version = fampe.version.version
release = version

language = 'en'
exclude_patterns = []
pygments_style = 'monokai'
todo_include_todos = False

# -- Options for HTML output ----------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_static_path = ['_static']
htmlhelp_basename = 'fampedoc'

# -- Options for LaTeX output ---------------------------------------------

latex_documents = [
    (master_doc, 'fampe.tex', u'fampe Documentation',
     author, 'manual'),
]

# -- Options for manual page output ---------------------------------------

man_pages = [
    (master_doc, 'fampe', u'fampe Documentation',
     [author], 1)
]

# -- Options for Texinfo output -------------------------------------------

texinfo_documents = [
    (master_doc, 'fampe', u'fampe Documentation',
     author, 'fampe', 'Frequency-aware attribution of image classifiers.',
     'Miscellaneous'),
]
