# Copyright 2024 The amvuq Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from .._chain import (
    bracket_step_size as bracket_step_size,
    make_preconditioner as make_preconditioner,
    make_sampler as make_sampler,
)
from .._fbm import (
    fractional_apply as fractional_apply,
    fractional_multiplier as fractional_multiplier,
)
from .._mcmc import Proposal as Proposal
from .._misc import tree_full_like as tree_full_like, tree_where as tree_where
