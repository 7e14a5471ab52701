"""Pool-based active-learning benchmark for formation-energy regression.

Modules: ``dataset`` (ingestion, descriptors, splits), ``model`` (ReLU
network committee), ``strategies`` (the four query selectors), ``al_loop``
(the iterate-train-query loop), ``stats`` (aggregation and significance),
``cli`` (command-line front end). The training kernel runs compiled when
the extension is built, pure numpy otherwise; see ``kernels.BACKEND``.
"""

__version__ = "0.1.0"
