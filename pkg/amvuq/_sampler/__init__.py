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

from .hmc import HMC as HMC, kinetic_energy as kinetic_energy, leapfrog as leapfrog
from .mala import MALA as MALA, mala_log_ratio as mala_log_ratio
from .random_walk import RandomWalk as RandomWalk, rw_propose as rw_propose
